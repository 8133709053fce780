//! Parameter sensitivities and Fisher information along a trajectory.
//!
//! With the full-state measurement model `y = x + w`, the measurement
//! Jacobian with respect to the parameters is exactly the state sensitivity
//! `dx/dtheta`, so the information contributed by each knot is
//! `S^T R^-1 S` with `R` the measurement covariance.

use nalgebra::{Matrix4, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BodyWrench, FreeflyerModel, FreeflyerState, Matrix6x4};

/// `dx_k / dtheta`, 6x4.
pub type SensitivityMatrix = Matrix6x4;

/// Default regularizer added to the FIM before inversion.
pub const DEFAULT_FIM_EPS: f64 = 1e-6;

/// Diagonal measurement and process noise covariances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Measurement covariance diagonal (rx, ry, phi, vx, vy, omega).
    pub sigma_r: [f64; 6],
    /// Process covariance diagonal, per unit time.
    pub sigma_q: [f64; 6],
}

impl Default for NoiseModel {
    fn default() -> Self {
        let p = 0.005_f64 * 0.005;
        let a = 0.01_f64 * 0.01;
        Self { sigma_r: [p, p, a, p, p, a], sigma_q: [1e-8; 6] }
    }
}

impl NoiseModel {
    pub fn is_valid(&self) -> bool {
        self.sigma_r.iter().all(|s| s.is_finite() && *s > 0.0) && self.sigma_q.iter().all(|s| s.is_finite() && *s > 0.0)
    }

    pub fn r_inv_diag(&self) -> Vector6<f64> {
        Vector6::from_fn(|i, _| 1.0 / self.sigma_r[i])
    }
}

/// Accumulated Fisher information over `(m, cx, cy, izz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FimAccumulator {
    pub f: Matrix4<f64>,
}

impl Default for FimAccumulator {
    fn default() -> Self {
        Self::zero()
    }
}

impl FimAccumulator {
    pub fn zero() -> Self {
        Self { f: Matrix4::zeros() }
    }

    /// Adds `H^T R^-1 H` for one measurement Jacobian.
    pub fn accumulate(&self, h: &Matrix6x4, noise: &NoiseModel) -> Self {
        Self { f: self.f + information_increment(h, &noise.r_inv_diag()) }
    }

    /// A-optimality cost `tr((F + eps I)^-1)`.
    pub fn a_optimality(&self, eps: f64) -> f64 {
        a_optimality(&self.f, eps)
    }

    pub fn trace(&self) -> f64 {
        self.f.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.f).eigenvalues.min()
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }
}

fn information_increment(h: &Matrix6x4, r_inv: &Vector6<f64>) -> Matrix4<f64> {
    let mut weighted = *h;
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= r_inv[i];
    }
    let inc = h.transpose() * weighted;
    // exact symmetry keeps downstream eigen/Cholesky routines happy
    (inc + inc.transpose()) * 0.5
}

/// `tr((F + eps I)^-1)`, evaluated through a Cholesky factor.
pub fn a_optimality(f: &Matrix4<f64>, eps: f64) -> f64 {
    let reg = f + Matrix4::identity() * eps;
    match reg.cholesky() {
        Some(ch) => ch.inverse().trace(),
        None => reg.try_inverse().map_or(f64::INFINITY, |inv| inv.trace()),
    }
}

/// Measurement Jacobian under the full-state measurement model: `H = S`.
pub fn measurement_jacobian(s: &SensitivityMatrix) -> Matrix6x4 {
    *s
}

/// Advances `dx/dtheta` across one knot interval.
///
/// Uses the exact Jacobians of the RK4 step that advances the state, so the
/// sensitivity is consistent with the discretized trajectory:
/// `S' = Phi_x S + Phi_theta`.
pub fn propagate_sensitivity(
    model: &FreeflyerModel,
    state: &FreeflyerState,
    u: &BodyWrench,
    s: &SensitivityMatrix,
    dt: f64,
) -> SensitivityMatrix {
    let (_, jac) = model.step_with_jacobians(&state.to_vector(), &u.to_vector(), dt);
    jac.phi_x * s + jac.phi_theta
}

/// Per-knot quantities of a FIM rollout. Index `k` holds values at knot `k`.
#[derive(Clone, Debug)]
pub struct FimRollout {
    pub states: Vec<Vector6<f64>>,
    pub sensitivities: Vec<SensitivityMatrix>,
    /// Information accumulated through knot `k` inclusive.
    pub partial: Vec<Matrix4<f64>>,
}

impl FimRollout {
    pub fn fim(&self) -> FimAccumulator {
        FimAccumulator { f: *self.partial.last().expect("rollout has at least one knot") }
    }
}

/// Rolls out the dynamics from `x0`, propagating sensitivities and
/// accumulating information at every knot.
pub fn fim_rollout(
    model: &FreeflyerModel,
    x0: &Vector6<f64>,
    inputs: &[Vector3<f64>],
    dt: f64,
    noise: &NoiseModel,
) -> FimRollout {
    let n = inputs.len();
    let mut out = FimRollout {
        states: Vec::with_capacity(n + 1),
        sensitivities: Vec::with_capacity(n + 1),
        partial: Vec::with_capacity(n + 1),
    };
    out.states.push(*x0);
    out.sensitivities.push(SensitivityMatrix::zeros());
    out.partial.push(Matrix4::zeros());
    extend_rollout(model, &mut out, inputs, dt, &noise.r_inv_diag());
    out
}

/// Continues a rollout from its last knot through `inputs`.
pub(crate) fn extend_rollout(
    model: &FreeflyerModel,
    out: &mut FimRollout,
    inputs: &[Vector3<f64>],
    dt: f64,
    r_inv: &Vector6<f64>,
) {
    let mut x = *out.states.last().unwrap();
    let mut s = *out.sensitivities.last().unwrap();
    let mut f = *out.partial.last().unwrap();
    for u in inputs {
        let (next, jac) = model.step_with_jacobians(&x, u, dt);
        s = jac.phi_x * s + jac.phi_theta;
        x = next;
        f += information_increment(&measurement_jacobian(&s), r_inv);
        out.states.push(x);
        out.sensitivities.push(s);
        out.partial.push(f);
    }
}

/// Final FIM of a rollout resumed at a knot with state `x`, sensitivity `s`
/// and accumulated information `f`; nothing is stored along the way.
pub(crate) fn continue_fim(
    model: &FreeflyerModel,
    mut x: Vector6<f64>,
    mut s: SensitivityMatrix,
    mut f: Matrix4<f64>,
    inputs: &[Vector3<f64>],
    dt: f64,
    r_inv: &Vector6<f64>,
) -> Matrix4<f64> {
    for u in inputs {
        let (next, jac) = model.step_with_jacobians(&x, u, dt);
        s = jac.phi_x * s + jac.phi_theta;
        x = next;
        f += information_increment(&measurement_jacobian(&s), r_inv);
    }
    f
}

/// Final FIM after applying `inputs` from `x0` with knot spacing `dt`.
pub fn fim_along_trajectory(
    model: &FreeflyerModel,
    x0: &FreeflyerState,
    inputs: &[BodyWrench],
    dt: f64,
    noise: &NoiseModel,
) -> FimAccumulator {
    let raw: Vec<Vector3<f64>> = inputs.iter().map(BodyWrench::to_vector).collect();
    fim_rollout(model, &x0.to_vector(), &raw, dt, noise).fim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InertialParams;
    use approx::assert_relative_eq;

    #[test]
    fn no_excitation_no_sensitivity() {
        let model = FreeflyerModel::new(InertialParams::ASTROBEE_SIM);
        let s = propagate_sensitivity(
            &model,
            &FreeflyerState::default(),
            &BodyWrench::default(),
            &SensitivityMatrix::zeros(),
            0.5,
        );
        assert_eq!(s, SensitivityMatrix::zeros());
    }

    #[test]
    fn mass_sensitivity_after_one_step() {
        let model = FreeflyerModel::new(InertialParams::ASTROBEE_SIM);
        let (fx, dt, m) = (0.3, 0.5, 19.568);
        let s = propagate_sensitivity(
            &model,
            &FreeflyerState::default(),
            &BodyWrench::new(fx, 0.0, 0.0),
            &SensitivityMatrix::zeros(),
            dt,
        );
        assert_relative_eq!(s[(3, 0)], -fx * dt / (m * m), max_relative = 1e-12);
    }

    #[test]
    fn measurement_jacobian_is_sensitivity() {
        let s = SensitivityMatrix::from_fn(|i, j| (i * 4 + j) as f64 * 0.37 - 2.0);
        let h = measurement_jacobian(&s);
        assert_eq!(h, s);
        assert_eq!(h.shape(), (6, 4));
        assert_eq!(measurement_jacobian(&SensitivityMatrix::zeros()), SensitivityMatrix::zeros());
    }

    #[test]
    fn accumulate_single_entry() {
        let noise = NoiseModel { sigma_r: [1.0; 6], sigma_q: [1.0; 6] };
        let mut h = Matrix6x4::zeros();
        h[(0, 0)] = 2.0;
        let f = FimAccumulator::zero().accumulate(&h, &noise);
        let mut expected = Matrix4::zeros();
        expected[(0, 0)] = 4.0;
        assert_eq!(f.f, expected);
        assert_eq!(f.accumulate(&Matrix6x4::zeros(), &noise), f);
    }

    #[test]
    fn a_optimality_values() {
        assert_relative_eq!(FimAccumulator::zero().a_optimality(1e-6), 4e6, max_relative = 1e-12);
        let f = FimAccumulator { f: Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 2.0, 4.0, 8.0)) };
        assert_relative_eq!(f.a_optimality(1e-12), 1.875, epsilon = 1e-10);
    }

    #[test]
    fn zero_inputs_from_rest_give_zero_fim() {
        let model = FreeflyerModel::new(InertialParams::COMBINED_SIM);
        let f = fim_along_trajectory(
            &model,
            &FreeflyerState::at_rest(1.0, 2.0, 0.3),
            &[BodyWrench::default(); 12],
            0.5,
            &NoiseModel::default(),
        );
        assert_eq!(f.f, Matrix4::zeros());
    }

    #[test]
    fn pure_translation_leaves_izz_uninformed() {
        let model = FreeflyerModel::new(InertialParams::ASTROBEE_SIM);
        let inputs: Vec<_> =
            (0..20).map(|k| BodyWrench::new(0.3 * (0.4 * k as f64).sin(), 0.2 * (0.3 * k as f64).cos(), 0.0)).collect();
        let f = fim_along_trajectory(&model, &FreeflyerState::default(), &inputs, 0.5, &NoiseModel::default());
        assert!(f.f[(0, 0)] > 0.0);
        for i in 0..4 {
            assert_eq!(f.f[(3, i)], 0.0);
            assert_eq!(f.f[(i, 3)], 0.0);
        }
    }

    #[test]
    fn doubling_measurement_covariance_halves_fim() {
        let model = FreeflyerModel::new(InertialParams::COMBINED_SIM);
        let inputs: Vec<_> = (0..15).map(|k| BodyWrench::new(0.2, -0.1, 0.05 * (k as f64).cos())).collect();
        let noise = NoiseModel::default();
        let mut doubled = noise;
        for s in doubled.sigma_r.iter_mut() {
            *s *= 2.0;
        }
        let x0 = FreeflyerState::default();
        let f1 = fim_along_trajectory(&model, &x0, &inputs, 0.5, &noise);
        let f2 = fim_along_trajectory(&model, &x0, &inputs, 0.5, &doubled);
        assert_relative_eq!(f2.f * 2.0, f1.f, max_relative = 1e-14);
    }
}
