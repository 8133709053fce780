//! Short-horizon nonlinear MPC tracking the current local plan.
//!
//! Each step interpolates the plan onto the control grid, solves the
//! tracking problem (no information term) warm-started from the previous
//! solution shifted by one knot, and applies the first input.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{angle_diff, wrap_angle, BodyWrench, FreeflyerModel, FreeflyerState, InertialParams};
use crate::local_plan::{CostWeights, LocalPlan};
use crate::optim::{minimize_box, project, Objective, SolverSettings};
use crate::shooting::{to_flat, to_inputs, TrackingProblem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon_nc: usize,
    /// Knot spacing, s; equal to the control period.
    pub dt_c: f64,
    /// Tracking weights; `gamma` must be zero.
    pub weights: CostWeights,
    pub u_max: f64,
    pub coriolis: bool,
    pub solver: SolverSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = [200.0, 200.0, 50.0, 100.0, 100.0, 10.0];
        Self {
            horizon_nc: 10,
            dt_c: 0.1,
            weights: CostWeights { q, r: [1.0; 3], q_f: q.map(|v| 10.0 * v), gamma: 0.0 },
            u_max: 0.4,
            coriolis: false,
            solver: SolverSettings { max_iterations: 50, ..SolverSettings::default() },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("MPC weights must be valid with gamma = 0 and a horizon of at least one knot")]
    InvalidConfig,
    /// The carried output is still within the input box and may be applied.
    #[error("MPC solve did not converge")]
    DidNotConverge(Box<MpcOutput>),
}

/// Previous solution, valid only for the parameters it was computed with.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcWarmStart {
    pub inputs: Vec<Vector3<f64>>,
    pub theta: InertialParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcOutput {
    pub u0: BodyWrench,
    pub predicted: Vec<FreeflyerState>,
    pub cost: f64,
    pub warm_start: MpcWarmStart,
}

impl MpcError {
    pub fn into_output(self) -> Option<MpcOutput> {
        match self {
            Self::DidNotConverge(out) => Some(*out),
            Self::InvalidConfig => None,
        }
    }
}

/// Plan state at time `t`: linear in position and velocity, shortest arc in
/// heading, held at the ends.
pub fn interpolate_plan(plan: &LocalPlan, t: f64) -> FreeflyerState {
    let s = (t - plan.t0) / plan.dt;
    let last = plan.states.len() - 1;
    if s <= 0.0 {
        return plan.states[0];
    }
    if s >= last as f64 {
        return plan.states[last];
    }
    let i = s.floor() as usize;
    let a = s - i as f64;
    let (p, q) = (plan.states[i], plan.states[i + 1]);
    let lerp = |x: f64, y: f64| x + a * (y - x);
    FreeflyerState {
        rx: lerp(p.rx, q.rx),
        ry: lerp(p.ry, q.ry),
        phi: wrap_angle(p.phi + a * angle_diff(q.phi, p.phi)),
        vx: lerp(p.vx, q.vx),
        vy: lerp(p.vy, q.vy),
        omega: lerp(p.omega, q.omega),
    }
}

/// Plan input held over the knot interval containing `t`; zero outside the plan.
pub fn plan_input_at(plan: &LocalPlan, t: f64) -> BodyWrench {
    let s = (t - plan.t0) / plan.dt;
    if s < 0.0 || s >= plan.inputs.len() as f64 {
        return BodyWrench::default();
    }
    plan.inputs[s.floor() as usize]
}

struct Tracking<'a>(TrackingProblem<'a>);

impl Objective for Tracking<'_> {
    fn cost(&mut self, x: &[f64]) -> f64 {
        self.0.cost(&to_inputs(x)).total()
    }

    fn cost_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let (c, g) = self.0.cost_gradient(&to_inputs(x));
        (c.total(), to_flat(&g))
    }

    fn curvature(&mut self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.0.gauss_newton(&to_inputs(x)))
    }
}

/// One control step from `x_now` at time `elapsed`.
///
/// The input penalty is taken relative to the plan's own inputs, so tracking
/// a plan costs nothing beyond the feedback correction.
pub fn mpc_step(
    x_now: &FreeflyerState,
    theta_hat: &InertialParams,
    plan: &LocalPlan,
    elapsed: f64,
    cfg: &MpcConfig,
    warm_start: Option<&MpcWarmStart>,
) -> Result<MpcOutput, MpcError> {
    let nc = cfg.horizon_nc;
    if nc == 0 || cfg.weights.gamma != 0.0 || !cfg.weights.is_valid() {
        return Err(MpcError::InvalidConfig);
    }
    let time = |k: usize| elapsed + k as f64 * cfg.dt_c;
    let problem = TrackingProblem {
        model: FreeflyerModel::with_coriolis(*theta_hat, cfg.coriolis),
        x0: x_now.to_vector(),
        dt: cfg.dt_c,
        x_ref: (0..=nc).map(|k| interpolate_plan(plan, time(k)).to_vector()).collect(),
        u_ref: (0..nc).map(|k| plan_input_at(plan, time(k)).clamped(cfg.u_max).to_vector()).collect(),
        q: cfg.weights.q_matrix(),
        r: cfg.weights.r_matrix(),
        q_f: cfg.weights.q_f_matrix(),
        world: None,
        w_obs: 0.0,
        margin: 0.0,
    };

    let mut objective = Tracking(problem);
    let zero = vec![0.0; 3 * nc];
    let initial: Vec<f64> = match warm_start {
        Some(ws) if ws.theta == *theta_hat && !ws.inputs.is_empty() => {
            let mut shifted: Vec<Vector3<f64>> = ws.inputs.iter().skip(1).copied().collect();
            shifted.resize(nc, *ws.inputs.last().unwrap());
            let mut shifted = to_flat(&shifted);
            project(&mut shifted, cfg.u_max);
            // a stale warm start may be worse than doing nothing
            if objective.cost(&shifted) <= objective.cost(&zero) {
                shifted
            } else {
                zero
            }
        }
        _ => zero,
    };

    let solution = minimize_box(&mut objective, &initial, cfg.u_max, &cfg.solver);
    let inputs = to_inputs(&solution.x);
    let predicted = objective.0.rollout(&inputs).iter().map(FreeflyerState::from_vector).collect();
    let out = MpcOutput {
        u0: BodyWrench::from_vector(&inputs[0]).clamped(cfg.u_max),
        predicted,
        cost: solution.cost,
        warm_start: MpcWarmStart { inputs, theta: *theta_hat },
    };
    if solution.converged() {
        Ok(out)
    } else {
        Err(MpcError::DidNotConverge(Box::new(out)))
    }
}
