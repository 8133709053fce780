//! Monte Carlo sets and informative-versus-nominal comparisons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioConfig;
use super::sim::run_scenario;
use super::trace::{RunStatus, Trace};
use super::HarnessError;
use crate::dynamics::InertialParams;

/// One value per parameter, in `(m, cx, cy, izz)` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub m: f64,
    pub cx: f64,
    pub cy: f64,
    pub izz: f64,
}

impl ParamValues {
    pub fn from_array(a: [f64; 4]) -> Self {
        Self { m: a[0], cx: a[1], cy: a[2], izz: a[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.m, self.cx, self.cy, self.izz]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// `goal_reached`, `timeout`, or an error code.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub duration: f64,
    pub final_theta: Option<InertialParams>,
    pub final_p_diag: Option<ParamValues>,
    pub replans: usize,
    pub model_updates: usize,
    pub model_swaps: usize,
    pub max_abs_wrench: f64,
}

impl RunSummary {
    pub fn from_trace(trace: &Trace) -> Self {
        let (theta, p) = trace.final_estimate();
        Self {
            seed: trace.seed,
            status: match trace.status {
                RunStatus::GoalReached => "goal_reached".into(),
                RunStatus::Timeout => "timeout".into(),
            },
            error: None,
            duration: trace.duration(),
            final_theta: Some(theta),
            final_p_diag: Some(ParamValues::from_array(p)),
            replans: trace.replan_count(),
            model_updates: trace.model_update_count(),
            model_swaps: trace.model_swap_count(),
            max_abs_wrench: trace.max_abs_wrench(),
        }
    }

    fn from_result(seed: u64, result: Result<Trace, HarnessError>) -> Self {
        match result {
            Ok(trace) => Self::from_trace(&trace),
            Err(HarnessError::Timeout(trace)) => Self::from_trace(&trace),
            Err(e) => Self {
                seed,
                status: e.code().into(),
                error: Some(e.to_string()),
                duration: 0.0,
                final_theta: None,
                final_p_diag: None,
                replans: 0,
                model_updates: 0,
                model_swaps: 0,
                max_abs_wrench: 0.0,
            },
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status == "goal_reached"
    }
}

/// Aggregates over the runs that reached the goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_runs: usize,
    pub failures: usize,
    pub runs: Vec<RunSummary>,
    /// Mean of `theta_hat - theta_true`.
    pub mean_error: ParamValues,
    /// Sample standard deviation of `theta_hat - theta_true`; zero for a single run.
    pub std_error: ParamValues,
    /// Mean final covariance diagonal.
    pub mean_p_diag: ParamValues,
}

impl MonteCarloSummary {
    pub fn from_runs(runs: Vec<RunSummary>, theta_true: &InertialParams) -> Self {
        let ok: Vec<&RunSummary> = runs.iter().filter(|r| r.succeeded()).collect();
        let truth = theta_true.to_vector();
        let errors: Vec<[f64; 4]> = ok
            .iter()
            .map(|r| {
                let e = r.final_theta.expect("successful run").to_vector() - truth;
                [e[0], e[1], e[2], e[3]]
            })
            .collect();
        let p_diags: Vec<[f64; 4]> = ok.iter().map(|r| r.final_p_diag.expect("successful run").to_array()).collect();
        Self {
            n_runs: runs.len(),
            failures: runs.len() - ok.len(),
            mean_error: ParamValues::from_array(mean(&errors)),
            std_error: ParamValues::from_array(std_dev(&errors)),
            mean_p_diag: ParamValues::from_array(mean(&p_diags)),
            runs,
        }
    }
}

fn mean(rows: &[[f64; 4]]) -> [f64; 4] {
    let mut m = [0.0; 4];
    if rows.is_empty() {
        return [f64::NAN; 4];
    }
    for r in rows {
        for i in 0..4 {
            m[i] += r[i];
        }
    }
    m.map(|v| v / rows.len() as f64)
}

fn std_dev(rows: &[[f64; 4]]) -> [f64; 4] {
    if rows.len() < 2 {
        return if rows.is_empty() { [f64::NAN; 4] } else { [0.0; 4] };
    }
    let mu = mean(rows);
    let mut s = [0.0; 4];
    for r in rows {
        for i in 0..4 {
            s[i] += (r[i] - mu[i]).powi(2);
        }
    }
    s.map(|v| (v / (rows.len() - 1) as f64).sqrt())
}

fn run_many(cfg: &ScenarioConfig, n_runs: usize) -> Vec<RunSummary> {
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            RunSummary::from_result(c.seed, run_scenario(&c))
        })
        .collect()
}

/// Runs seeds `seed, seed + 1, ..` in parallel; results are in seed order.
pub fn monte_carlo(cfg: &ScenarioConfig, n_runs: usize) -> Result<MonteCarloSummary, HarnessError> {
    if n_runs == 0 {
        return Err(HarnessError::InvalidConfig("n_runs must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(MonteCarloSummary::from_runs(run_many(cfg, n_runs), &cfg.theta_true))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub nominal: MonteCarloSummary,
    pub informative: MonteCarloSummary,
    /// Seeds at which both arms reached the goal; the percentages use only these.
    pub matched_pairs: usize,
    /// `(informative - nominal) / nominal * 100` on the mean final covariance diagonals.
    pub percent_change: ParamValues,
}

/// Matched-seed pairs with the information term off and on.
pub fn compare_informative(cfg: &ScenarioConfig, n_runs: usize) -> Result<CompareSummary, HarnessError> {
    if n_runs < 2 {
        return Err(HarnessError::InvalidConfig("n_runs must be at least 2".into()));
    }
    cfg.validate()?;
    let mut nominal_cfg = cfg.clone();
    nominal_cfg.flags.informative = false;
    let mut info_cfg = cfg.clone();
    info_cfg.flags.informative = true;

    let nominal = run_many(&nominal_cfg, n_runs);
    let informative = run_many(&info_cfg, n_runs);
    let pairs: Vec<(&RunSummary, &RunSummary)> =
        nominal.iter().zip(&informative).filter(|(a, b)| a.succeeded() && b.succeeded()).collect();
    let diag = |r: &RunSummary| r.final_p_diag.expect("successful run").to_array();
    let nominal_p = mean(&pairs.iter().map(|(a, _)| diag(a)).collect::<Vec<_>>());
    let info_p = mean(&pairs.iter().map(|(_, b)| diag(b)).collect::<Vec<_>>());
    let mut pct = [0.0; 4];
    for i in 0..4 {
        pct[i] = (info_p[i] - nominal_p[i]) / nominal_p[i] * 100.0;
    }
    Ok(CompareSummary {
        matched_pairs: pairs.len(),
        percent_change: ParamValues::from_array(pct),
        nominal: MonteCarloSummary::from_runs(nominal, &cfg.theta_true),
        informative: MonteCarloSummary::from_runs(informative, &cfg.theta_true),
    })
}
