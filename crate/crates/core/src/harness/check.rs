//! Standalone trace validator.

use super::scenario::ScenarioConfig;
use super::trace::{RunStatus, Trace};

/// Every violation found in `trace`; empty means the trace is acceptable.
///
/// Checks the control-rate time grid, the input box, covariance health,
/// collision freedom of every ground-truth sample, goal entry and the
/// replan / model-update schedule.
pub fn check_trace(trace: &Trace, cfg: &ScenarioConfig) -> Vec<String> {
    let mut v = Vec::new();
    let tc = cfg.rates.control_period();
    let u_max = cfg.planner.mpc.u_max;

    for (i, pair) in trace.rows.windows(2).enumerate() {
        let dt = pair[1].t - pair[0].t;
        if !(dt > 0.0) || (dt - tc).abs() > 1e-9 {
            v.push(format!("row {}: time step {dt} differs from the control period", i + 1));
        }
    }
    if trace.rows.first().is_some_and(|r| r.t != 0.0) {
        v.push("first row is not at t = 0".into());
    }
    for r in &trace.rows {
        if r.wrench().max_abs() > u_max + 1e-12 {
            v.push(format!("t = {}: wrench {:?} exceeds {u_max}", r.t, r.wrench()));
        }
        if r.p_diag().iter().any(|p| !(*p >= 0.0)) || r.cov_min_eig < -1e-9 {
            v.push(format!("t = {}: filter covariance not positive semidefinite", r.t));
        }
    }
    for (t, x) in &trace.truth {
        if !x.is_finite() || !cfg.world.is_free([x.rx, x.ry]) {
            v.push(format!("t = {t}: ground truth at ({}, {}) is in collision", x.rx, x.ry));
        }
    }
    if trace.status == RunStatus::GoalReached {
        match trace.truth.last() {
            Some((_, x)) if cfg.goal.contains([x.rx, x.ry], x.world_velocity()) => {}
            _ => v.push("status is goal_reached but the final state is outside the goal".into()),
        }
    }

    let d = trace.duration();
    let expected_replans = (d / cfg.rates.replan_period + 1e-9).floor() as usize;
    if trace.replan_count() != expected_replans {
        v.push(format!("{} local replans, schedule requires {expected_replans}", trace.replan_count()));
    }
    let expected_updates = (d / cfg.rates.model_update_period + 1e-9).floor() as usize;
    if trace.model_update_count() != expected_updates {
        v.push(format!("{} model updates, schedule requires {expected_updates}", trace.model_update_count()));
    }
    v
}
