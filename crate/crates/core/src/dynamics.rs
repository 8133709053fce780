//! Planar rigid-body dynamics of a free-flyer whose center of mass is offset
//! from the body reference point.
//!
//! The state is expressed at the body reference point `B`: world-frame
//! position and heading, body-frame velocity and angular rate. Inputs are a
//! body-frame force and a torque about the reference axis. The uncertain
//! inertial parameters are always ordered `(m, cx, cy, izz)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix6x3 = SMatrix<f64, 6, 3>;
pub type Matrix6x4 = SMatrix<f64, 6, 4>;
type Matrix6x13 = SMatrix<f64, 6, 13>;

/// Default bound on the norm of the CM offset, m.
pub const DEFAULT_OFFSET_LIMIT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("moment of inertia must be positive and finite, got {0}")]
    InvalidInertia(f64),
    #[error("CM offset ({cx}, {cy}) is non-finite or exceeds {limit} m")]
    InvalidOffset { cx: f64, cy: f64, limit: f64 },
}

/// Uncertain inertial parameters `(m, cx, cy, izz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertialParams {
    /// Mass, kg.
    pub m: f64,
    /// CM offset along body x, m.
    pub cx: f64,
    /// CM offset along body y, m.
    pub cy: f64,
    /// Moment of inertia about the CM, kg m^2.
    pub izz: f64,
}

impl InertialParams {
    /// Robot with arm and carriage, no payload (simulation values).
    pub const ASTROBEE_SIM: Self = Self { m: 19.568, cx: 0.0, cy: 0.0, izz: 0.282 };
    /// Robot grappling the payload (simulation values, izz about the CM).
    pub const COMBINED_SIM: Self = Self { m: 31.368, cx: 0.0, cy: -0.115, izz: 0.980 };
    /// Robot with arm and carriage, no payload (hardware approximation).
    pub const ASTROBEE_HW: Self = Self { m: 19.0, cx: 0.0, cy: 0.0, izz: 0.25 };
    /// Robot grappling the payload (hardware approximation).
    pub const COMBINED_HW: Self = Self { m: 30.8, cx: 0.0, cy: -0.12, izz: 0.94 };

    pub fn new(m: f64, cx: f64, cy: f64, izz: f64) -> Result<Self, DynamicsError> {
        let theta = Self { m, cx, cy, izz };
        theta.validate(DEFAULT_OFFSET_LIMIT)?;
        Ok(theta)
    }

    pub fn validate(&self, offset_limit: f64) -> Result<(), DynamicsError> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(DynamicsError::InvalidMass(self.m));
        }
        if !(self.izz.is_finite() && self.izz > 0.0) {
            return Err(DynamicsError::InvalidInertia(self.izz));
        }
        let c = self.cx.hypot(self.cy);
        if !c.is_finite() || c > offset_limit {
            return Err(DynamicsError::InvalidOffset { cx: self.cx, cy: self.cy, limit: offset_limit });
        }
        Ok(())
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.m, self.cx, self.cy, self.izz)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self { m: v[0], cx: v[1], cy: v[2], izz: v[3] }
    }

    /// Mass matrix of the offset rigid body, symmetric with `det = m^2 izz`.
    pub fn mass_matrix(&self) -> Matrix3<f64> {
        let Self { m, cx, cy, izz } = *self;
        Matrix3::new(m, 0.0, -m * cy, 0.0, m, m * cx, -m * cy, m * cx, izz + m * (cx * cx + cy * cy))
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Shortest signed angular distance `a - b`, in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Planar free-flyer state at the body reference point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeflyerState {
    pub rx: f64,
    pub ry: f64,
    /// Heading, rad, kept in `(-pi, pi]`.
    pub phi: f64,
    /// Body-frame velocity, m/s.
    pub vx: f64,
    pub vy: f64,
    /// Angular rate, rad/s.
    pub omega: f64,
}

impl FreeflyerState {
    pub fn at_rest(rx: f64, ry: f64, phi: f64) -> Self {
        Self { rx, ry, phi: wrap_angle(phi), ..Self::default() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.rx, self.ry, self.phi, self.vx, self.vy, self.omega)
    }

    /// Builds a state from a raw vector, wrapping the heading.
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { rx: v[0], ry: v[1], phi: wrap_angle(v[2]), vx: v[3], vy: v[4], omega: v[5] }
    }

    /// World-frame velocity of the reference point.
    pub fn world_velocity(&self) -> [f64; 2] {
        let (s, c) = self.phi.sin_cos();
        [c * self.vx - s * self.vy, s * self.vx + c * self.vy]
    }

    /// State error `self - other` with the heading component wrapped.
    pub fn error_from(&self, other: &Self) -> Vector6<f64> {
        let mut e = self.to_vector() - other.to_vector();
        e[2] = angle_diff(self.phi, other.phi);
        e
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// Body-frame force and torque.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyWrench {
    pub fx: f64,
    pub fy: f64,
    pub tau: f64,
}

impl BodyWrench {
    pub fn new(fx: f64, fy: f64, tau: f64) -> Self {
        Self { fx, fy, tau }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.fx, self.fy, self.tau)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self { fx: v[0], fy: v[1], tau: v[2] }
    }

    /// Per-component clip to `[-u_max, u_max]`.
    pub fn clamped(&self, u_max: f64) -> Self {
        Self { fx: self.fx.clamp(-u_max, u_max), fy: self.fy.clamp(-u_max, u_max), tau: self.tau.clamp(-u_max, u_max) }
    }

    pub fn max_abs(&self) -> f64 {
        self.fx.abs().max(self.fy.abs()).max(self.tau.abs())
    }
}

/// Continuous-time Jacobians of the state derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobians {
    /// d(xdot)/dx
    pub a: Matrix6,
    /// d(xdot)/du
    pub b: Matrix6x3,
    /// d(xdot)/dtheta, columns (m, cx, cy, izz)
    pub g: Matrix6x4,
}

/// Jacobians of one discrete RK4 step `x_next = F(x, u, theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepJacobians {
    pub phi_x: Matrix6,
    pub phi_u: Matrix6x3,
    pub phi_theta: Matrix6x4,
}

/// Dynamics model at a fixed parameter value.
///
/// The inverse mass matrix is cached at construction; the model is an
/// immutable value and may be shared freely across threads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeflyerModel {
    theta: InertialParams,
    coriolis: bool,
    m_inv: Matrix3<f64>,
}

impl FreeflyerModel {
    /// Model following the offset-CM equations verbatim (no `omega x v` coupling).
    pub fn new(theta: InertialParams) -> Self {
        Self::with_coriolis(theta, false)
    }

    /// Optionally adds the `m (omega vy, -omega vx)` body-frame coupling terms.
    pub fn with_coriolis(theta: InertialParams, coriolis: bool) -> Self {
        let m_inv = theta.mass_matrix().try_inverse().expect("mass matrix is invertible for m > 0, izz > 0");
        Self { theta, coriolis, m_inv }
    }

    pub fn theta(&self) -> &InertialParams {
        &self.theta
    }

    pub fn coriolis(&self) -> bool {
        self.coriolis
    }

    pub fn mass_matrix(&self) -> Matrix3<f64> {
        self.theta.mass_matrix()
    }

    fn forcing(&self, x: &Vector6<f64>, u: &Vector3<f64>) -> Vector3<f64> {
        let InertialParams { m, cx, cy, .. } = self.theta;
        let (vx, vy, w) = (x[3], x[4], x[5]);
        let mut b = Vector3::new(u[0] + m * w * w * cx, u[1] + m * w * w * cy, u[2]);
        if self.coriolis {
            b[0] += m * w * vy;
            b[1] -= m * w * vx;
        }
        b
    }

    fn accel_vec(&self, x: &Vector6<f64>, u: &Vector3<f64>) -> Vector3<f64> {
        self.m_inv * self.forcing(x, u)
    }

    /// Body-frame accelerations `(vx_dot, vy_dot, omega_dot)`.
    pub fn acceleration(&self, state: &FreeflyerState, u: &BodyWrench) -> Vector3<f64> {
        self.accel_vec(&state.to_vector(), &u.to_vector())
    }

    /// Time derivative of the raw state vector.
    pub fn derivative_vec(&self, x: &Vector6<f64>, u: &Vector3<f64>) -> Vector6<f64> {
        let (s, c) = x[2].sin_cos();
        let a = self.accel_vec(x, u);
        Vector6::new(c * x[3] - s * x[4], s * x[3] + c * x[4], x[5], a[0], a[1], a[2])
    }

    /// Time derivative of the state, packed in a `FreeflyerState` (heading slot holds `phi_dot`).
    pub fn state_derivative(&self, state: &FreeflyerState, u: &BodyWrench) -> FreeflyerState {
        let d = self.derivative_vec(&state.to_vector(), &u.to_vector());
        FreeflyerState { rx: d[0], ry: d[1], phi: d[2], vx: d[3], vy: d[4], omega: d[5] }
    }

    /// One classical RK4 step with the input held constant; heading re-wrapped.
    pub fn step(&self, state: &FreeflyerState, u: &BodyWrench, dt: f64) -> FreeflyerState {
        FreeflyerState::from_vector(&self.step_vec(&state.to_vector(), &u.to_vector(), dt))
    }

    pub fn step_vec(&self, x: &Vector6<f64>, u: &Vector3<f64>, dt: f64) -> Vector6<f64> {
        let k1 = self.derivative_vec(x, u);
        let k2 = self.derivative_vec(&(x + k1 * (0.5 * dt)), u);
        let k3 = self.derivative_vec(&(x + k2 * (0.5 * dt)), u);
        let k4 = self.derivative_vec(&(x + k3 * dt), u);
        let mut next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        next[2] = wrap_angle(next[2]);
        next
    }

    /// Analytic continuous-time Jacobians at `(x, u)`.
    pub fn jacobians(&self, state: &FreeflyerState, u: &BodyWrench) -> Jacobians {
        self.jacobians_vec(&state.to_vector(), &u.to_vector())
    }

    pub fn jacobians_vec(&self, x: &Vector6<f64>, u: &Vector3<f64>) -> Jacobians {
        let InertialParams { m, cx, cy, .. } = self.theta;
        let (phi, vx, vy, w) = (x[2], x[3], x[4], x[5]);
        let (s, c) = phi.sin_cos();
        let co = if self.coriolis { 1.0 } else { 0.0 };
        let acc = self.accel_vec(x, u);

        let mut a = Matrix6::zeros();
        a[(0, 2)] = -s * vx - c * vy;
        a[(0, 3)] = c;
        a[(0, 4)] = -s;
        a[(1, 2)] = c * vx - s * vy;
        a[(1, 3)] = s;
        a[(1, 4)] = c;
        a[(2, 5)] = 1.0;

        // d(forcing)/d(vx, vy, omega)
        let db_dvx = Vector3::new(0.0, -co * m * w, 0.0);
        let db_dvy = Vector3::new(co * m * w, 0.0, 0.0);
        let db_dw = Vector3::new(2.0 * m * w * cx + co * m * vy, 2.0 * m * w * cy - co * m * vx, 0.0);
        a.fixed_view_mut::<3, 1>(3, 3).copy_from(&(self.m_inv * db_dvx));
        a.fixed_view_mut::<3, 1>(3, 4).copy_from(&(self.m_inv * db_dvy));
        a.fixed_view_mut::<3, 1>(3, 5).copy_from(&(self.m_inv * db_dw));

        let mut b = Matrix6x3::zeros();
        b.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.m_inv);

        // d(accel)/d(theta_i) = M^-1 (db/dtheta_i - dM/dtheta_i * accel)
        let dm_dm = Matrix3::new(1.0, 0.0, -cy, 0.0, 1.0, cx, -cy, cx, cx * cx + cy * cy);
        let dm_dcx = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, m, 0.0, m, 2.0 * m * cx);
        let dm_dcy = Matrix3::new(0.0, 0.0, -m, 0.0, 0.0, 0.0, -m, 0.0, 2.0 * m * cy);
        let db_dm = Vector3::new(w * w * cx + co * w * vy, w * w * cy - co * w * vx, 0.0);
        let db_dcx = Vector3::new(m * w * w, 0.0, 0.0);
        let db_dcy = Vector3::new(0.0, m * w * w, 0.0);
        let cols = [db_dm - dm_dm * acc, db_dcx - dm_dcx * acc, db_dcy - dm_dcy * acc, Vector3::new(0.0, 0.0, -acc[2])];
        let mut g = Matrix6x4::zeros();
        for (j, col) in cols.iter().enumerate() {
            g.fixed_view_mut::<3, 1>(3, j).copy_from(&(self.m_inv * col));
        }

        Jacobians { a, b, g }
    }

    /// One RK4 step together with its exact Jacobians with respect to the
    /// state, the held input and the parameters (forward-mode through the stages).
    pub fn step_with_jacobians(&self, x: &Vector6<f64>, u: &Vector3<f64>, dt: f64) -> (Vector6<f64>, StepJacobians) {
        let mut seed = Matrix6x13::zeros();
        seed.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();

        let stage = |xs: &Vector6<f64>, dxs: &Matrix6x13| -> (Vector6<f64>, Matrix6x13) {
            let k = self.derivative_vec(xs, u);
            let jac = self.jacobians_vec(xs, u);
            let mut dk = jac.a * dxs;
            let mut du = dk.fixed_view_mut::<6, 3>(0, 6);
            du += jac.b;
            let mut dtheta = dk.fixed_view_mut::<6, 4>(0, 9);
            dtheta += jac.g;
            (k, dk)
        };

        let (k1, d1) = stage(x, &seed);
        let (k2, d2) = stage(&(x + k1 * (0.5 * dt)), &(seed + d1 * (0.5 * dt)));
        let (k3, d3) = stage(&(x + k2 * (0.5 * dt)), &(seed + d2 * (0.5 * dt)));
        let (k4, d4) = stage(&(x + k3 * dt), &(seed + d3 * dt));

        let mut next = x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        next[2] = wrap_angle(next[2]);
        let total = seed + (d1 + (d2 + d3) * 2.0 + d4) * (dt / 6.0);
        let jac = StepJacobians {
            phi_x: total.fixed_view::<6, 6>(0, 0).into_owned(),
            phi_u: total.fixed_view::<6, 3>(0, 6).into_owned(),
            phi_theta: total.fixed_view::<6, 4>(0, 9).into_owned(),
        };
        (next, jac)
    }
}
