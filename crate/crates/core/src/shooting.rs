//! Single-shooting tracking problem over held inputs.
//!
//! Decision variables are the inputs `u_0..u_{N-1}` flattened as
//! `[fx_0, fy_0, tau_0, fx_1, ...]`; states follow from RK4 rollout at the
//! model parameters, so every iterate is dynamically consistent.

use nalgebra::{DMatrix, Matrix3, Vector3, Vector6};

use crate::dynamics::{angle_diff, FreeflyerModel, Matrix6, StepJacobians};
use crate::world::ObstacleWorld;

/// Stage cost `e^T Q e + (u - u_ref)^T R (u - u_ref)`, terminal `e^T Q_f e`,
/// plus a hinge penalty at every knot on penetration of the inflated
/// obstacles and of the workspace bounds, both grown by `margin`.
#[derive(Clone, Debug)]
pub struct TrackingProblem<'a> {
    pub model: FreeflyerModel,
    pub x0: Vector6<f64>,
    pub dt: f64,
    /// Per-knot state references, length `N + 1`.
    pub x_ref: Vec<Vector6<f64>>,
    /// Per-knot input references, length `N`.
    pub u_ref: Vec<Vector3<f64>>,
    pub q: Matrix6,
    pub r: Matrix3<f64>,
    pub q_f: Matrix6,
    pub world: Option<&'a ObstacleWorld>,
    pub w_obs: f64,
    /// Extra clearance beyond the inflated radius covered by the penalty, m.
    pub margin: f64,
}

/// Cost split by source.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrackingCost {
    pub state: f64,
    pub input: f64,
    pub penalty: f64,
}

impl TrackingCost {
    pub fn total(&self) -> f64 {
        self.state + self.input + self.penalty
    }
}

pub fn to_inputs(flat: &[f64]) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3).map(Vector3::from_column_slice).collect()
}

pub fn to_flat(inputs: &[Vector3<f64>]) -> Vec<f64> {
    inputs.iter().flat_map(|u| u.iter().copied()).collect()
}

impl TrackingProblem<'_> {
    pub fn horizon(&self) -> usize {
        self.u_ref.len()
    }

    pub fn rollout(&self, inputs: &[Vector3<f64>]) -> Vec<Vector6<f64>> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(self.x0);
        for u in inputs {
            let x = self.model.step_vec(states.last().unwrap(), u, self.dt);
            states.push(x);
        }
        states
    }

    fn rollout_with_jacobians(&self, inputs: &[Vector3<f64>]) -> (Vec<Vector6<f64>>, Vec<StepJacobians>) {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        let mut jacs = Vec::with_capacity(inputs.len());
        states.push(self.x0);
        for u in inputs {
            let (x, jac) = self.model.step_with_jacobians(states.last().unwrap(), u, self.dt);
            states.push(x);
            jacs.push(jac);
        }
        (states, jacs)
    }

    fn error(&self, x: &Vector6<f64>, k: usize) -> Vector6<f64> {
        let mut e = x - self.x_ref[k];
        e[2] = angle_diff(x[2], self.x_ref[k][2]);
        e
    }

    /// Signed penetration past each wall, `(axis, outward sign, depth)`.
    fn wall_penetrations(&self, x: &Vector6<f64>) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let b = self.world.map(|w| w.bounds);
        let margin = self.margin;
        let p = [x[0], x[1]];
        (0..2)
            .flat_map(move |i| {
                b.into_iter()
                    .flat_map(move |b| [(i, -1.0, b.min[i] + margin - p[i]), (i, 1.0, p[i] - (b.max[i] - margin))])
            })
            .filter(|&(_, _, depth)| depth > 0.0)
    }

    fn penalty(&self, x: &Vector6<f64>) -> f64 {
        let Some(world) = self.world else { return 0.0 };
        let obstacles: f64 = world
            .obstacles
            .iter()
            .map(|c| {
                let reach = c.radius + world.inflation + self.margin;
                let d = (x[0] - c.center[0]).hypot(x[1] - c.center[1]);
                (reach - d).max(0.0).powi(2)
            })
            .sum();
        let walls: f64 = self.wall_penetrations(x).map(|(_, _, depth)| depth * depth).sum();
        (obstacles + walls) * self.w_obs
    }

    fn penalty_gradient(&self, x: &Vector6<f64>) -> Vector6<f64> {
        let mut g = Vector6::zeros();
        let Some(world) = self.world else { return g };
        for c in &world.obstacles {
            let reach = c.radius + world.inflation + self.margin;
            let (dx, dy) = (x[0] - c.center[0], x[1] - c.center[1]);
            let d = dx.hypot(dy);
            if d < reach && d > 0.0 {
                let k = -2.0 * self.w_obs * (reach - d) / d;
                g[0] += k * dx;
                g[1] += k * dy;
            }
        }
        for (i, sign, depth) in self.wall_penetrations(x) {
            g[i] += 2.0 * self.w_obs * depth * sign;
        }
        g
    }

    /// Gauss-Newton part of the penalty Hessian in state coordinates.
    fn penalty_curvature(&self, x: &Vector6<f64>) -> Matrix6 {
        let mut w = Matrix6::zeros();
        let Some(world) = self.world else { return w };
        for c in &world.obstacles {
            let reach = c.radius + world.inflation + self.margin;
            let (dx, dy) = (x[0] - c.center[0], x[1] - c.center[1]);
            let d = dx.hypot(dy);
            if d < reach && d > 0.0 {
                let (nx, ny) = (dx / d, dy / d);
                let k = 2.0 * self.w_obs;
                w[(0, 0)] += k * nx * nx;
                w[(0, 1)] += k * nx * ny;
                w[(1, 0)] += k * nx * ny;
                w[(1, 1)] += k * ny * ny;
            }
        }
        for (i, _, _) in self.wall_penetrations(x) {
            w[(i, i)] += 2.0 * self.w_obs;
        }
        w
    }

    pub fn cost_of(&self, states: &[Vector6<f64>], inputs: &[Vector3<f64>]) -> TrackingCost {
        let n = inputs.len();
        let mut c = TrackingCost::default();
        for k in 0..n {
            let e = self.error(&states[k], k);
            let du = inputs[k] - self.u_ref[k];
            c.state += e.dot(&(self.q * e));
            c.input += du.dot(&(self.r * du));
            c.penalty += self.penalty(&states[k]);
        }
        let e = self.error(&states[n], n);
        c.state += e.dot(&(self.q_f * e));
        c.penalty += self.penalty(&states[n]);
        c
    }

    pub fn cost(&self, inputs: &[Vector3<f64>]) -> TrackingCost {
        self.cost_of(&self.rollout(inputs), inputs)
    }

    /// Cost and its exact gradient by the discrete adjoint recursion
    /// `lambda_k = dl/dx_k + Phi_x^T lambda_{k+1}`, `g_k = dl/du_k + Phi_u^T lambda_{k+1}`.
    pub fn cost_gradient(&self, inputs: &[Vector3<f64>]) -> (TrackingCost, Vec<Vector3<f64>>) {
        let n = inputs.len();
        let (states, jacs) = self.rollout_with_jacobians(inputs);
        let cost = self.cost_of(&states, inputs);

        let qs = self.q + self.q.transpose();
        let rs = self.r + self.r.transpose();
        let qfs = self.q_f + self.q_f.transpose();

        let mut lambda = qfs * self.error(&states[n], n) + self.penalty_gradient(&states[n]);
        let mut grad = vec![Vector3::zeros(); n];
        for k in (0..n).rev() {
            let jac = &jacs[k];
            grad[k] = rs * (inputs[k] - self.u_ref[k]) + jac.phi_u.transpose() * lambda;
            lambda =
                qs * self.error(&states[k], k) + self.penalty_gradient(&states[k]) + jac.phi_x.transpose() * lambda;
        }
        (cost, grad)
    }

    /// Gauss-Newton Hessian of the cost with respect to the flat inputs,
    /// built from forward input sensitivities `dx_k/du`.
    pub fn gauss_newton(&self, inputs: &[Vector3<f64>]) -> DMatrix<f64> {
        let n = inputs.len();
        let m = 3 * n;
        let (states, jacs) = self.rollout_with_jacobians(inputs);
        let mut h = DMatrix::zeros(m, m);
        let rs = self.r + self.r.transpose();
        for k in 0..n {
            h.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&rs);
        }
        let qs = self.q + self.q.transpose();
        let mut s = DMatrix::<f64>::zeros(6, m);
        for k in 0..=n {
            let w = if k == n { self.q_f + self.q_f.transpose() } else { qs } + self.penalty_curvature(&states[k]);
            if k > 0 {
                // only inputs before knot k influence it
                let cols = 3 * k;
                let sk = s.columns(0, cols);
                let wd = DMatrix::from_column_slice(6, 6, w.as_slice());
                let block = sk.transpose() * (wd * sk);
                let mut view = h.view_mut((0, 0), (cols, cols));
                view += block;
            }
            if k < n {
                let phi_x = DMatrix::from_column_slice(6, 6, jacs[k].phi_x.as_slice());
                s = phi_x * s;
                let mut col = s.view_mut((0, 3 * k), (6, 3));
                col += DMatrix::from_column_slice(6, 3, jacs[k].phi_u.as_slice());
            }
        }
        h
    }
}
