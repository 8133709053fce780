//! Joint state and parameter extended Kalman filter.
//!
//! The filter state is `[rx, ry, phi, vx, vy, omega, m, cx, cy, izz]`. The
//! parameters are modeled as constants; they are observed only through the
//! dynamics, since the measurement is the full pose and twist.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4, Vector6};
use thiserror::Error;

use crate::dynamics::{wrap_angle, BodyWrench, FreeflyerModel, FreeflyerState, InertialParams};
use crate::information::NoiseModel;

pub type Vector10 = SVector<f64, 10>;
pub type Matrix10 = SMatrix<f64, 10, 10>;

/// Bounds applied to the parameter block after each update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub m: (f64, f64),
    pub izz: (f64, f64),
    pub offset: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { m: (0.1, 1000.0), izz: (1e-3, 100.0), offset: 1.0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("innovation covariance is not invertible; check the measurement covariance")]
    SingularInnovation,
}

/// Mean and covariance of the joint state/parameter belief.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfBelief {
    pub mean: Vector10,
    pub cov: Matrix10,
    /// Number of updates so far in which the parameter clamp was active.
    pub clamp_count: u32,
}

impl EkfBelief {
    pub fn new(
        state: &FreeflyerState,
        state_cov_diag: &[f64; 6],
        theta: &InertialParams,
        theta_cov_diag: &[f64; 4],
    ) -> Self {
        let mut mean = Vector10::zeros();
        mean.fixed_rows_mut::<6>(0).copy_from(&state.to_vector());
        mean.fixed_rows_mut::<4>(6).copy_from(&theta.to_vector());
        let mut cov = Matrix10::zeros();
        for i in 0..6 {
            cov[(i, i)] = state_cov_diag[i];
        }
        for i in 0..4 {
            cov[(6 + i, 6 + i)] = theta_cov_diag[i];
        }
        Self { mean, cov, clamp_count: 0 }
    }

    pub fn state(&self) -> FreeflyerState {
        FreeflyerState::from_vector(&self.mean.fixed_rows::<6>(0).into_owned())
    }

    pub fn theta(&self) -> InertialParams {
        InertialParams::from_vector(&self.mean.fixed_rows::<4>(6).into_owned())
    }

    /// Parameter estimate and its marginal covariance.
    pub fn param_estimate(&self) -> (InertialParams, Matrix4<f64>) {
        (self.theta(), self.cov.fixed_view::<4, 4>(6, 6).into_owned())
    }

    /// Propagates the belief across one control interval with the input held.
    ///
    /// The mean uses the belief's own parameter estimate; the covariance uses
    /// `Phi = I + dt [[A, G], [0, 0]]` evaluated at the prior mean.
    pub fn predict(&self, u: &BodyWrench, dt: f64, noise: &NoiseModel, coriolis: bool) -> Self {
        let model = FreeflyerModel::with_coriolis(self.theta(), coriolis);
        let x = self.state();
        let jac = model.jacobians(&x, u);
        let next = model.step(&x, u, dt);

        let mut mean = self.mean;
        mean.fixed_rows_mut::<6>(0).copy_from(&next.to_vector());

        let mut phi = Matrix10::identity();
        let mut dynamics_block = phi.fixed_view_mut::<6, 6>(0, 0);
        dynamics_block += jac.a * dt;
        phi.fixed_view_mut::<6, 4>(0, 6).copy_from(&(jac.g * dt));
        let mut cov = phi * self.cov * phi.transpose();
        for i in 0..6 {
            cov[(i, i)] += noise.sigma_q[i] * dt;
        }
        Self { mean, cov: symmetrize(&cov), clamp_count: self.clamp_count }
    }

    /// Fuses a full-state measurement (Joseph-form covariance update).
    pub fn update(&self, y: &FreeflyerState, noise: &NoiseModel) -> Result<Self, EstimationError> {
        self.update_with_bounds(y, noise, &ParamBounds::default())
    }

    pub fn update_with_bounds(
        &self,
        y: &FreeflyerState,
        noise: &NoiseModel,
        bounds: &ParamBounds,
    ) -> Result<Self, EstimationError> {
        let r = Matrix6::from_diagonal(&Vector6::from_row_slice(&noise.sigma_r));
        let p_xx = self.cov.fixed_view::<6, 6>(0, 0).into_owned();
        let s = symmetrize6(&(p_xx + r));
        let s_inv = s.cholesky().map(|c| c.inverse()).ok_or(EstimationError::SingularInnovation)?;
        if !s_inv.iter().all(|v| v.is_finite()) {
            return Err(EstimationError::SingularInnovation);
        }

        // P H^T with H = [I6, 0]
        let pht = self.cov.fixed_view::<10, 6>(0, 0).into_owned();
        let gain = pht * s_inv;

        let mut innovation = y.to_vector() - self.mean.fixed_rows::<6>(0);
        innovation[2] = wrap_angle(innovation[2]);

        let mut mean = self.mean + gain * innovation;
        mean[2] = wrap_angle(mean[2]);

        let mut i_kh = Matrix10::identity();
        let mut measured_block = i_kh.fixed_view_mut::<10, 6>(0, 0);
        measured_block -= gain;
        let cov = i_kh * self.cov * i_kh.transpose() + gain * r * gain.transpose();

        let clamped = clamp_params(&mut mean, bounds);
        Ok(Self { mean, cov: symmetrize(&cov), clamp_count: self.clamp_count + u32::from(clamped) })
    }
}

type Matrix6 = SMatrix<f64, 6, 6>;

fn symmetrize(p: &Matrix10) -> Matrix10 {
    (p + p.transpose()) * 0.5
}

fn symmetrize6(p: &Matrix6) -> Matrix6 {
    (p + p.transpose()) * 0.5
}

fn clamp_params(mean: &mut Vector10, bounds: &ParamBounds) -> bool {
    let before: Vector4<f64> = mean.fixed_rows::<4>(6).into_owned();
    mean[6] = mean[6].clamp(bounds.m.0, bounds.m.1);
    mean[9] = mean[9].clamp(bounds.izz.0, bounds.izz.1);
    let c = mean[7].hypot(mean[8]);
    if c > bounds.offset {
        let k = bounds.offset / c;
        mean[7] *= k;
        mean[8] *= k;
    }
    mean.fixed_rows::<4>(6) != before
}
