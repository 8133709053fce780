//! Scenario files: TOML documents with the fields of [`ScenarioConfig`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::control::MpcConfig;
use crate::dynamics::{FreeflyerState, InertialParams, DEFAULT_OFFSET_LIMIT};
use crate::global_plan::{GoalRegion, RrtConfig};
use crate::information::NoiseModel;
use crate::local_plan::{CostWeights, LocalPlannerConfig};
use crate::world::ObstacleWorld;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaInit {
    pub mean: InertialParams,
    /// Prior variances of (m, cx, cy, izz).
    pub cov_diag: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    /// Ground-truth integration step, s.
    pub dt_sim: f64,
    pub control_hz: f64,
    /// Local replan period, s.
    pub replan_period: f64,
    /// Model-update gate period, s.
    pub model_update_period: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { dt_sim: 0.02, control_hz: 10.0, replan_period: 12.0, model_update_period: 16.0 }
    }
}

impl Rates {
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_hz
    }

    /// Sub-steps per control period and control ticks per replan / model update.
    pub fn ticks(&self) -> Result<(usize, usize, usize), HarnessError> {
        let whole = |num: f64, den: f64, what: &str| {
            let r = num / den;
            let k = r.round();
            if k >= 1.0 && (r - k).abs() <= 1e-9 * r.max(1.0) {
                Ok(k as usize)
            } else {
                Err(HarnessError::InvalidConfig(format!("{what} is not a whole multiple")))
            }
        };
        let tc = self.control_period();
        Ok((
            whole(tc, self.dt_sim, "control period / dt_sim")?,
            whole(self.replan_period, tc, "replan_period / control period")?,
            whole(self.model_update_period, tc, "model_update_period / control period")?,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    /// Plan with the information term (`gamma0` schedule); otherwise `gamma = 0`.
    pub informative: bool,
    /// Recompute the global plan whenever the model is swapped.
    pub global_replan: bool,
    /// Include the rotating-frame velocity terms in truth and models.
    pub include_coriolis: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self { informative: true, global_replan: false, include_coriolis: false }
    }
}

/// Tuning for the planning and control stack; every field has a default.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSettings {
    pub rrt: RrtConfig,
    pub local: LocalPlannerConfig,
    pub weights: CostWeights,
    pub mpc: MpcConfig,
    /// Initial state variances of the filter; the measurement variances when unset.
    pub state_cov_diag: Option<[f64; 6]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// s
    pub max_sim_time: f64,
    pub gamma0: f64,
    /// Decay time of the information weight; a tenth of the global plan duration when unset.
    #[serde(default)]
    pub tau: Option<f64>,
    pub theta_true: InertialParams,
    pub theta_init: ThetaInit,
    pub world: ObstacleWorld,
    pub x0: FreeflyerState,
    pub goal: GoalRegion,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub planner: PlannerSettings,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.to_string()));
        if let Err(e) = self.theta_true.validate(DEFAULT_OFFSET_LIMIT) {
            return bad(&format!("theta_true: {e}"));
        }
        if let Err(e) = self.theta_init.mean.validate(DEFAULT_OFFSET_LIMIT) {
            return bad(&format!("theta_init.mean: {e}"));
        }
        if !self.theta_init.cov_diag.iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("theta_init.cov_diag must be positive");
        }
        if let Err(e) = self.world.validate() {
            return bad(&format!("world: {e}"));
        }
        if !self.world.bounds.contains(self.goal.center) {
            return bad("goal centre lies outside the world bounds");
        }
        if !(self.goal.tolerance > 0.0 && self.goal.velocity_tolerance > 0.0) {
            return bad("goal tolerances must be positive");
        }
        if !self.x0.is_finite() || !self.world.is_free([self.x0.rx, self.x0.ry]) {
            return bad("x0 must be finite and in free space");
        }
        if !self.noise.is_valid() {
            return bad("noise covariances must be positive");
        }
        if !(self.max_sim_time > 0.0) || !(self.gamma0 >= 0.0) || self.tau.is_some_and(|t| !(t > 0.0)) {
            return bad("max_sim_time and tau must be positive, gamma0 non-negative");
        }
        if !(self.rates.dt_sim > 0.0 && self.rates.control_hz > 0.0) {
            return bad("rates must be positive");
        }
        self.rates.ticks()?;
        let mpc = &self.planner.mpc;
        if (mpc.dt_c - self.rates.control_period()).abs() > 1e-12 {
            return bad("planner.mpc.dt_c must equal the control period");
        }
        if mpc.weights.gamma != 0.0 {
            return bad("planner.mpc.weights.gamma must be 0");
        }
        if !self.planner.weights.is_valid() || !mpc.weights.is_valid() {
            return bad("cost weights must be finite with Q >= 0 and R > 0");
        }
        if self.planner.state_cov_diag.is_some_and(|d| !d.iter().all(|v| v.is_finite() && *v >= 0.0)) {
            return bad("planner.state_cov_diag must be non-negative");
        }
        Ok(())
    }
}
