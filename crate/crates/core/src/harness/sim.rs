//! The closed-loop procedure: global plan once, local replans, MPC at the
//! control rate, filter updates and gated model swaps, all driven by integer
//! tick counters so the schedule is exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::ScenarioConfig;
use super::trace::{Event, EventKind, RunStatus, Trace, TraceRecord};
use super::HarnessError;
use crate::control::{mpc_step, MpcConfig, MpcOutput, MpcWarmStart};
use crate::dynamics::{BodyWrench, FreeflyerModel, FreeflyerState, InertialParams};
use crate::estimation::EkfBelief;
use crate::global_plan::{plan_global, GlobalPlan};
use crate::local_plan::{
    gamma_schedule, plan_local_along, reference_along, select_waypoint, LocalPlan, LocalPlanError, LocalPlannerConfig,
};

/// Seeds the planner stream apart from the noise stream.
const PLANNER_SEED_OFFSET: u64 = 0x005e_ed0f_91a2;

fn measure(x: &FreeflyerState, sigma_r: &[f64; 6], rng: &mut ChaCha8Rng) -> FreeflyerState {
    let mut v = x.to_vector();
    for (i, s) in sigma_r.iter().enumerate() {
        v[i] += Normal::new(0.0, s.sqrt()).expect("finite variance").sample(rng);
    }
    FreeflyerState::from_vector(&v)
}

struct Loop<'a> {
    cfg: &'a ScenarioConfig,
    local_cfg: LocalPlannerConfig,
    mpc_cfg: MpcConfig,
    global: GlobalPlan,
    /// Time the active global plan started.
    global_t0: f64,
    tau: f64,
    events: Vec<Event>,
}

impl Loop<'_> {
    fn replan_local(
        &mut self,
        t: f64,
        belief: &EkfBelief,
        theta_model: &InertialParams,
        plan_id: u32,
    ) -> Result<(LocalPlan, f64), HarnessError> {
        let gamma = if self.cfg.flags.informative { gamma_schedule(t, self.cfg.gamma0, self.tau) } else { 0.0 };
        let elapsed = t - self.global_t0;
        let lookahead = self.cfg.rates.replan_period;
        let (_, n) = select_waypoint(&self.global, elapsed, lookahead, self.local_cfg.dt_knot);
        let refs = reference_along(&self.global, elapsed, n, self.local_cfg.dt_knot);
        let weights = self.cfg.planner.weights.with_gamma(gamma);
        let result = plan_local_along(
            &belief.state(),
            theta_model,
            &refs,
            &weights,
            Some(&self.cfg.world),
            &self.local_cfg,
            &self.cfg.noise,
            None,
        );
        let mut plan = match result {
            Ok(p) => p,
            Err(LocalPlanError::DidNotConverge(p, _)) => *p,
            Err(e) => return Err(HarnessError::LocalPlanFailed(e)),
        };
        plan.t0 = t;
        self.events.push(Event {
            t,
            kind: EventKind::LocalReplan {
                plan_id,
                gamma,
                horizon: plan.horizon(),
                converged: plan.converged,
                info_trace: plan.info_trace,
            },
        });
        Ok((plan, gamma))
    }
}

/// The global plan a run of `cfg` starts from.
pub fn plan_scenario_global(cfg: &ScenarioConfig) -> Result<GlobalPlan, HarnessError> {
    cfg.validate()?;
    let x0 = cfg.x0;
    Ok(plan_global(
        [x0.rx, x0.ry],
        x0.world_velocity(),
        &cfg.goal,
        &cfg.world,
        &cfg.theta_init.mean,
        &cfg.planner.rrt,
        cfg.seed.wrapping_add(PLANNER_SEED_OFFSET),
    )?)
}

/// Runs one closed-loop scenario to goal entry or `max_sim_time`.
///
/// A timeout still yields the partial trace inside the error.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace, HarnessError> {
    cfg.validate()?;
    let (substeps, replan_ticks, update_ticks) = cfg.rates.ticks()?;
    let tc = cfg.rates.control_period();
    let dt_sim = tc / substeps as f64;
    let coriolis = cfg.flags.include_coriolis;

    let mut local_cfg = cfg.planner.local;
    local_cfg.coriolis = coriolis;
    let mut mpc_cfg = cfg.planner.mpc;
    mpc_cfg.coriolis = coriolis;

    let x0 = cfg.x0;
    let global = plan_scenario_global(cfg)?;
    let tau = cfg.tau.unwrap_or((global.total_time / 10.0).max(tc));
    let mut lp = Loop { cfg, local_cfg, mpc_cfg, global, global_t0: 0.0, tau, events: Vec::new() };

    let truth_model = FreeflyerModel::with_coriolis(cfg.theta_true, coriolis);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state_cov = cfg.planner.state_cov_diag.unwrap_or(cfg.noise.sigma_r);
    let mut belief = EkfBelief::new(&x0, &state_cov, &cfg.theta_init.mean, &cfg.theta_init.cov_diag);
    let mut theta_model = cfg.theta_init.mean;
    let mut swap_p_trace = belief.param_estimate().1.trace();
    let mut swap_clamps = belief.clamp_count;

    let mut x = x0;
    let mut rows = Vec::new();
    let mut truth = vec![(0.0, x)];
    let mut active: Option<(LocalPlan, f64)> = None;
    let mut plan_id = 0u32;
    let mut warm: Option<MpcWarmStart> = None;
    let mut status = RunStatus::Timeout;

    for tick in 0usize.. {
        let t = tick as f64 * tc;
        if cfg.goal.contains([x.rx, x.ry], x.world_velocity()) {
            status = RunStatus::GoalReached;
            break;
        }
        if t > cfg.max_sim_time + 1e-9 {
            break;
        }

        let y = measure(&x, &cfg.noise.sigma_r, &mut rng);
        belief = belief.update(&y, &cfg.noise)?;

        if tick > 0 && tick % update_ticks == 0 {
            let (theta_hat, p) = belief.param_estimate();
            let p_trace = p.trace();
            let swapped = p_trace < swap_p_trace && belief.clamp_count == swap_clamps;
            if swapped {
                theta_model = theta_hat;
                swap_p_trace = p_trace;
                swap_clamps = belief.clamp_count;
                warm = None;
            }
            lp.events.push(Event { t, kind: EventKind::ModelUpdate { swapped, theta: theta_hat, p_trace } });
            if swapped && cfg.flags.global_replan {
                let s = belief.state();
                if let Ok(g) = plan_global(
                    [s.rx, s.ry],
                    s.world_velocity(),
                    &cfg.goal,
                    &cfg.world,
                    &theta_model,
                    &cfg.planner.rrt,
                    cfg.seed.wrapping_add(PLANNER_SEED_OFFSET).wrapping_add(tick as u64),
                ) {
                    lp.events.push(Event { t, kind: EventKind::GlobalReplan { nodes: g.nodes.len() } });
                    lp.global = g;
                    lp.global_t0 = t;
                }
            }
        }

        if tick % replan_ticks == 0 {
            plan_id += 1;
            active = Some(lp.replan_local(t, &belief, &theta_model, plan_id)?);
        }
        let (plan, gamma) = active.as_ref().expect("planned at tick 0");

        let out: MpcOutput = match mpc_step(&belief.state(), &theta_model, plan, t, &lp.mpc_cfg, warm.as_ref()) {
            Ok(o) => o,
            Err(e) => {
                lp.events.push(Event { t, kind: EventKind::MpcNotConverged });
                e.into_output().ok_or_else(|| HarnessError::InvalidConfig("MPC configuration".into()))?
            }
        };
        let u: BodyWrench = out.u0;
        warm = Some(out.warm_start);

        rows.push(TraceRecord::new(t, &x, &y, &u, &belief, *gamma, plan.info_trace, plan_id));

        for s in 0..substeps {
            x = truth_model.step(&x, &u, dt_sim);
            let mut v = x.to_vector();
            for i in 3..6 {
                v[i] +=
                    Normal::new(0.0, (cfg.noise.sigma_q[i] * dt_sim).sqrt()).expect("finite variance").sample(&mut rng);
            }
            x = FreeflyerState::from_vector(&v);
            truth.push((t + (s + 1) as f64 * dt_sim, x));
        }
        belief = belief.predict(&u, tc, &cfg.noise, coriolis);
    }

    let trace =
        Trace { rows, truth, events: lp.events, status, global_plan: lp.global, final_belief: belief, seed: cfg.seed };
    match status {
        RunStatus::GoalReached => Ok(trace),
        RunStatus::Timeout => Err(HarnessError::Timeout(Box::new(trace))),
    }
}
