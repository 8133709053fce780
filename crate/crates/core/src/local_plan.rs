//! Receding-horizon information-aware trajectory optimization.
//!
//! Minimizes tracking cost plus `gamma * tr((F + eps I)^-1)` over held inputs
//! by single shooting. The tracking gradient is exact (adjoint); the
//! information gradient uses forward differences that reuse the unperturbed
//! rollout up to the perturbed knot.

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{BodyWrench, FreeflyerModel, FreeflyerState, InertialParams, Matrix6};
use crate::global_plan::GlobalPlan;
use crate::information::{a_optimality, continue_fim, fim_rollout, NoiseModel, DEFAULT_FIM_EPS};
use crate::optim::{minimize_box, Objective, SolverSettings, StopReason};
use crate::shooting::{to_flat, to_inputs, TrackingProblem};
use crate::world::ObstacleWorld;

/// Diagonal tracking weights and the information weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub q: [f64; 6],
    pub r: [f64; 3],
    pub q_f: [f64; 6],
    #[serde(default)]
    pub gamma: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        let q = [10.0, 10.0, 5.0, 1.0, 1.0, 1.0];
        Self { q, r: [100.0; 3], q_f: q.map(|v| 10.0 * v), gamma: 0.0 }
    }
}

impl CostWeights {
    pub fn is_valid(&self) -> bool {
        let nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        self.q.iter().all(nonneg)
            && self.q_f.iter().all(nonneg)
            && self.r.iter().all(|v| v.is_finite() && *v > 0.0)
            && nonneg(&self.gamma)
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub(crate) fn q_matrix(&self) -> Matrix6 {
        Matrix6::from_diagonal(&Vector6::from_row_slice(&self.q))
    }

    pub(crate) fn q_f_matrix(&self) -> Matrix6 {
        Matrix6::from_diagonal(&Vector6::from_row_slice(&self.q_f))
    }

    pub(crate) fn r_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from_row_slice(&self.r))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalPlannerConfig {
    /// Knot spacing, s.
    pub dt_knot: f64,
    pub u_max: f64,
    /// FIM regularizer inside the A-optimality term.
    pub eps: f64,
    pub w_obs: f64,
    /// Clearance added to the inflated radius inside the obstacle penalty, m.
    pub obstacle_margin: f64,
    /// Forward-difference step for the information gradient; `1e-4 * u_max` when unset.
    pub fd_step: Option<f64>,
    /// Amplitude, as a fraction of `u_max`, of the torque dither seeding informative solves.
    pub dither: f64,
    pub coriolis: bool,
    pub solver: SolverSettings,
}

impl Default for LocalPlannerConfig {
    fn default() -> Self {
        Self {
            dt_knot: 0.5,
            u_max: 0.4,
            eps: DEFAULT_FIM_EPS,
            w_obs: 1e3,
            obstacle_margin: 0.0,
            fd_step: None,
            dither: 0.25,
            coriolis: false,
            solver: SolverSettings::default(),
        }
    }
}

impl LocalPlannerConfig {
    pub fn fd_step(&self) -> f64 {
        self.fd_step.unwrap_or(1e-4 * self.u_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalPlan {
    /// `x_0..x_N`.
    pub states: Vec<FreeflyerState>,
    /// `u_0..u_{N-1}`.
    pub inputs: Vec<BodyWrench>,
    pub dt: f64,
    /// Time of the first knot, s.
    pub t0: f64,
    pub achieved_cost: f64,
    /// `tr((F + eps I)^-1)` at the solution.
    pub info_trace: f64,
    pub gamma: f64,
    pub converged: bool,
}

impl LocalPlan {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * self.inputs.len() as f64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalPlanError {
    #[error("waypoint lies inside an inflated obstacle")]
    TargetInCollision,
    #[error("horizon must have at least 2 knots, got {0}")]
    HorizonTooShort(usize),
    #[error("cost weights must be finite with Q, Q_f >= 0, R > 0 and gamma >= 0")]
    InvalidWeights,
    /// The best iterate is still a valid plan; it is carried for use.
    #[error("local planner stopped without converging ({1:?})")]
    DidNotConverge(Box<LocalPlan>, StopReason),
}

impl LocalPlanError {
    /// The usable plan carried by a non-converged solve.
    pub fn into_plan(self) -> Option<LocalPlan> {
        match self {
            Self::DidNotConverge(plan, _) => Some(*plan),
            _ => None,
        }
    }
}

/// Decomposed plan objective: `total = tracking + gamma * info + penalty`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanCost {
    pub total: f64,
    pub tracking: f64,
    pub info: f64,
    pub penalty: f64,
}

/// `gamma0 * exp(-t / tau)`.
pub fn gamma_schedule(elapsed: f64, gamma0: f64, tau: f64) -> f64 {
    gamma0 * (-elapsed / tau).exp()
}

/// The first global node at least `lookahead` (one replan period) past
/// `elapsed`, as a full state with zero heading, and the horizon reaching it.
///
/// The horizon never drops below the lookahead, so every plan covers the
/// interval until the next replan.
pub fn select_waypoint(plan: &GlobalPlan, elapsed: f64, lookahead: f64, dt_knot: f64) -> (FreeflyerState, usize) {
    let times = plan.node_times();
    let idx = times.iter().position(|&t| t >= elapsed + lookahead - 1e-9).unwrap_or(plan.nodes.len() - 1);
    let node = &plan.nodes[idx];
    let to_go = ((times[idx] - elapsed) / dt_knot - 1e-9).ceil().max(0.0) as usize;
    let min_n = (lookahead / dt_knot - 1e-9).ceil() as usize;
    let target = FreeflyerState { rx: node.p[0], ry: node.p[1], phi: 0.0, vx: node.v[0], vy: node.v[1], omega: 0.0 };
    (target, to_go.max(min_n).max(2))
}

/// Knot references sampled along the global plan from `elapsed`, with zero heading.
pub fn reference_along(plan: &GlobalPlan, elapsed: f64, n: usize, dt: f64) -> Vec<FreeflyerState> {
    (0..=n)
        .map(|k| {
            let (p, v) = plan.state_at(elapsed + k as f64 * dt);
            FreeflyerState { rx: p[0], ry: p[1], phi: 0.0, vx: v[0], vy: v[1], omega: 0.0 }
        })
        .collect()
}

struct InfoObjective<'a> {
    problem: TrackingProblem<'a>,
    gamma: f64,
    eps: f64,
    noise: NoiseModel,
    fd_step: f64,
}

impl InfoObjective<'_> {
    fn info_at(&self, inputs: &[Vector3<f64>]) -> f64 {
        let ro = fim_rollout(&self.problem.model, &self.problem.x0, inputs, self.problem.dt, &self.noise);
        a_optimality(&ro.fim().f, self.eps)
    }
}

impl Objective for InfoObjective<'_> {
    fn cost(&mut self, x: &[f64]) -> f64 {
        let inputs = to_inputs(x);
        if self.gamma == 0.0 {
            return self.problem.cost(&inputs).total();
        }
        let ro = fim_rollout(&self.problem.model, &self.problem.x0, &inputs, self.problem.dt, &self.noise);
        self.problem.cost_of(&ro.states, &inputs).total() + self.gamma * a_optimality(&ro.fim().f, self.eps)
    }

    fn curvature(&mut self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.problem.gauss_newton(&to_inputs(x)))
    }

    fn cost_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut inputs = to_inputs(x);
        let (tracking, grad) = self.problem.cost_gradient(&inputs);
        let mut grad = to_flat(&grad);
        let mut f = tracking.total();
        if self.gamma == 0.0 {
            return (f, grad);
        }
        let p = &self.problem;
        let r_inv = self.noise.r_inv_diag();
        let base = fim_rollout(&p.model, &p.x0, &inputs, p.dt, &self.noise);
        let info0 = a_optimality(&base.fim().f, self.eps);
        f += self.gamma * info0;
        let h = self.fd_step;
        for k in 0..inputs.len() {
            for j in 0..3 {
                let saved = inputs[k][j];
                inputs[k][j] = saved + h;
                let fim = continue_fim(
                    &p.model,
                    base.states[k],
                    base.sensitivities[k],
                    base.partial[k],
                    &inputs[k..],
                    p.dt,
                    &r_inv,
                );
                inputs[k][j] = saved;
                grad[3 * k + j] += self.gamma * (a_optimality(&fim, self.eps) - info0) / h;
            }
        }
        (f, grad)
    }
}

fn tracking_problem<'a>(
    model: FreeflyerModel,
    x_now: &FreeflyerState,
    references: &[FreeflyerState],
    weights: &CostWeights,
    world: Option<&'a ObstacleWorld>,
    cfg: &LocalPlannerConfig,
) -> TrackingProblem<'a> {
    let n = references.len() - 1;
    TrackingProblem {
        model,
        x0: x_now.to_vector(),
        dt: cfg.dt_knot,
        x_ref: references.iter().map(FreeflyerState::to_vector).collect(),
        u_ref: vec![Vector3::zeros(); n],
        q: weights.q_matrix(),
        r: weights.r_matrix(),
        q_f: weights.q_f_matrix(),
        world,
        w_obs: cfg.w_obs,
        margin: cfg.obstacle_margin,
    }
}

/// Plans `n` knots from `x_now` toward the fixed waypoint `x_target`.
#[allow(clippy::too_many_arguments)]
pub fn plan_local(
    x_now: &FreeflyerState,
    theta_hat: &InertialParams,
    x_target: &FreeflyerState,
    weights: &CostWeights,
    world: Option<&ObstacleWorld>,
    n: usize,
    cfg: &LocalPlannerConfig,
    noise: &NoiseModel,
    warm_start: Option<&LocalPlan>,
) -> Result<LocalPlan, LocalPlanError> {
    plan_local_along(x_now, theta_hat, &vec![*x_target; n + 1], weights, world, cfg, noise, warm_start)
}

/// Plans against per-knot references `x_ref_0..x_ref_N`; the last one is the waypoint.
#[allow(clippy::too_many_arguments)]
pub fn plan_local_along(
    x_now: &FreeflyerState,
    theta_hat: &InertialParams,
    references: &[FreeflyerState],
    weights: &CostWeights,
    world: Option<&ObstacleWorld>,
    cfg: &LocalPlannerConfig,
    noise: &NoiseModel,
    warm_start: Option<&LocalPlan>,
) -> Result<LocalPlan, LocalPlanError> {
    let n = references.len().saturating_sub(1);
    if n < 2 {
        return Err(LocalPlanError::HorizonTooShort(n));
    }
    if !weights.is_valid() {
        return Err(LocalPlanError::InvalidWeights);
    }
    let target = references[n];
    if world.is_some_and(|w| w.in_collision([target.rx, target.ry])) {
        return Err(LocalPlanError::TargetInCollision);
    }

    let model = FreeflyerModel::with_coriolis(*theta_hat, cfg.coriolis);
    let problem = tracking_problem(model, x_now, references, weights, world, cfg);
    let mut initial = vec![0.0; 3 * n];
    if let Some(ws) = warm_start {
        for (slot, u) in initial.chunks_exact_mut(3).zip(&ws.inputs) {
            slot.copy_from_slice(u.to_vector().as_slice());
        }
    }

    let mut objective = InfoObjective { problem, gamma: 0.0, eps: cfg.eps, noise: *noise, fd_step: cfg.fd_step() };
    let mut solution = minimize_box(&mut objective, &initial, cfg.u_max, &cfg.solver);

    if weights.gamma > 0.0 {
        objective.gamma = weights.gamma;
        // a rotation-free guess is a stationary point of the information term in torque
        let mut dithered = solution.x.clone();
        for (k, slot) in dithered.chunks_exact_mut(3).enumerate() {
            slot[2] += cfg.dither * cfg.u_max * (std::f64::consts::TAU * k as f64 / 8.0).sin();
        }
        let start = [initial, solution.x.clone(), dithered]
            .into_iter()
            .map(|x| (objective.cost(&x), x))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, x)| x)
            .unwrap();
        solution = minimize_box(&mut objective, &start, cfg.u_max, &cfg.solver);
    }

    let inputs = to_inputs(&solution.x);
    let info_trace = objective.info_at(&inputs);
    let plan = LocalPlan {
        states: objective.problem.rollout(&inputs).iter().map(FreeflyerState::from_vector).collect(),
        inputs: inputs.iter().map(BodyWrench::from_vector).collect(),
        dt: cfg.dt_knot,
        t0: 0.0,
        achieved_cost: solution.cost,
        info_trace,
        gamma: weights.gamma,
        converged: solution.converged(),
    };
    if solution.converged() {
        Ok(plan)
    } else {
        Err(LocalPlanError::DidNotConverge(Box::new(plan), solution.stop))
    }
}

/// Cost the planner assigns to a trajectory, split by term.
#[allow(clippy::too_many_arguments)]
pub fn plan_cost(
    states: &[FreeflyerState],
    inputs: &[BodyWrench],
    references: &[FreeflyerState],
    weights: &CostWeights,
    theta_hat: &InertialParams,
    noise: &NoiseModel,
    world: Option<&ObstacleWorld>,
    cfg: &LocalPlannerConfig,
) -> PlanCost {
    let model = FreeflyerModel::with_coriolis(*theta_hat, cfg.coriolis);
    let problem = tracking_problem(model, &states[0], references, weights, world, cfg);
    let xs: Vec<Vector6<f64>> = states.iter().map(FreeflyerState::to_vector).collect();
    let us: Vec<Vector3<f64>> = inputs.iter().map(BodyWrench::to_vector).collect();
    let c = problem.cost_of(&xs, &us);
    let fim = fim_rollout(&model, &xs[0], &us, cfg.dt_knot, noise).fim();
    let info = a_optimality(&fim.f, cfg.eps);
    let tracking = c.state + c.input;
    PlanCost { total: tracking + weights.gamma * info + c.penalty, tracking, info, penalty: c.penalty }
}

/// Fisher information of a plan under its planning model.
pub fn plan_fim(plan: &LocalPlan, theta_hat: &InertialParams, noise: &NoiseModel, coriolis: bool) -> Matrix4<f64> {
    let model = FreeflyerModel::with_coriolis(*theta_hat, coriolis);
    let us: Vec<Vector3<f64>> = plan.inputs.iter().map(BodyWrench::to_vector).collect();
    fim_rollout(&model, &plan.states[0].to_vector(), &us, plan.dt, noise).fim().f
}
