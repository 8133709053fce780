//! Deterministic closed-loop simulation and experiment orchestration.

mod check;
mod scenario;
mod sim;
mod study;
mod trace;

pub use check::check_trace;
pub use scenario::{Flags, PlannerSettings, Rates, ScenarioConfig, ThetaInit};
pub use sim::{plan_scenario_global, run_scenario};
pub use study::{compare_informative, monte_carlo, CompareSummary, MonteCarloSummary, ParamValues, RunSummary};
pub use trace::{read_csv, Event, EventKind, RunStatus, Trace, TraceRecord, CSV_HEADER};

use thiserror::Error;

use crate::estimation::EstimationError;
use crate::global_plan::GlobalPlanError;
use crate::local_plan::LocalPlanError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("global planning failed: {0}")]
    GlobalPlanFailed(#[from] GlobalPlanError),
    #[error("local planning failed: {0}")]
    LocalPlanFailed(LocalPlanError),
    #[error("estimator failed: {0}")]
    Estimation(#[from] EstimationError),
    /// The partial trace up to the time limit.
    #[error("goal not reached within the time limit")]
    Timeout(Box<Trace>),
}

impl HarnessError {
    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::Parse(_) => "parse_error",
            Self::Io(_) => "io_error",
            Self::GlobalPlanFailed(_) => "global_plan_failed",
            Self::LocalPlanFailed(_) => "local_plan_failed",
            Self::Estimation(_) => "estimation_failed",
            Self::Timeout(_) => "timeout",
        }
    }
}
