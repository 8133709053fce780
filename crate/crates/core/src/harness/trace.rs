//! Closed-loop run records.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{BodyWrench, FreeflyerState, InertialParams};
use crate::estimation::EkfBelief;
use crate::global_plan::GlobalPlan;

/// One control tick; field order is the CSV column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub rx: f64,
    pub ry: f64,
    pub phi: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub mrx: f64,
    pub mry: f64,
    pub mphi: f64,
    pub mvx: f64,
    pub mvy: f64,
    pub momega: f64,
    pub fx: f64,
    pub fy: f64,
    pub tau: f64,
    pub m_hat: f64,
    pub cx_hat: f64,
    pub cy_hat: f64,
    pub izz_hat: f64,
    pub p_m: f64,
    pub p_cx: f64,
    pub p_cy: f64,
    pub p_izz: f64,
    pub gamma: f64,
    pub info_trace: f64,
    pub plan_id: u32,
    /// Smallest eigenvalue of the full filter covariance; not written to CSV.
    #[serde(skip)]
    pub cov_min_eig: f64,
}

pub const CSV_HEADER: &str = "t,rx,ry,phi,vx,vy,omega,mrx,mry,mphi,mvx,mvy,momega,fx,fy,tau,m_hat,cx_hat,cy_hat,izz_hat,p_m,p_cx,p_cy,p_izz,gamma,info_trace,plan_id";

impl TraceRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: f64,
        truth: &FreeflyerState,
        measured: &FreeflyerState,
        u: &BodyWrench,
        belief: &EkfBelief,
        gamma: f64,
        info_trace: f64,
        plan_id: u32,
    ) -> Self {
        let (theta, p) = belief.param_estimate();
        let cov_min_eig = nalgebra::SymmetricEigen::new(belief.cov).eigenvalues.min();
        Self {
            t,
            rx: truth.rx,
            ry: truth.ry,
            phi: truth.phi,
            vx: truth.vx,
            vy: truth.vy,
            omega: truth.omega,
            mrx: measured.rx,
            mry: measured.ry,
            mphi: measured.phi,
            mvx: measured.vx,
            mvy: measured.vy,
            momega: measured.omega,
            fx: u.fx,
            fy: u.fy,
            tau: u.tau,
            m_hat: theta.m,
            cx_hat: theta.cx,
            cy_hat: theta.cy,
            izz_hat: theta.izz,
            p_m: p[(0, 0)],
            p_cx: p[(1, 1)],
            p_cy: p[(2, 2)],
            p_izz: p[(3, 3)],
            gamma,
            info_trace,
            plan_id,
            cov_min_eig,
        }
    }

    pub fn truth(&self) -> FreeflyerState {
        FreeflyerState { rx: self.rx, ry: self.ry, phi: self.phi, vx: self.vx, vy: self.vy, omega: self.omega }
    }

    pub fn wrench(&self) -> BodyWrench {
        BodyWrench::new(self.fx, self.fy, self.tau)
    }

    pub fn p_diag(&self) -> [f64; 4] {
        [self.p_m, self.p_cx, self.p_cy, self.p_izz]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    GoalReached,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    LocalReplan {
        plan_id: u32,
        gamma: f64,
        horizon: usize,
        converged: bool,
        info_trace: f64,
    },
    /// Gate evaluation; `swapped` tells whether the estimate entered the models.
    ModelUpdate {
        swapped: bool,
        theta: InertialParams,
        p_trace: f64,
    },
    GlobalReplan {
        nodes: usize,
    },
    MpcNotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Everything recorded during one closed-loop run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRecord>,
    /// Ground-truth samples `(t, state)` at every simulation sub-step.
    pub truth: Vec<(f64, FreeflyerState)>,
    pub events: Vec<Event>,
    pub status: RunStatus,
    pub global_plan: GlobalPlan,
    pub final_belief: EkfBelief,
    pub seed: u64,
}

impl Trace {
    /// Time of the last recorded row.
    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    /// Local replans after the initial plan.
    pub fn replan_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::LocalReplan { .. }) && e.t > 0.0).count()
    }

    pub fn model_update_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::ModelUpdate { .. })).count()
    }

    pub fn model_swap_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::ModelUpdate { swapped: true, .. })).count()
    }

    pub fn max_abs_wrench(&self) -> f64 {
        self.rows.iter().map(|r| r.wrench().max_abs()).fold(0.0, f64::max)
    }

    /// Final parameter estimate and covariance diagonal.
    pub fn final_estimate(&self) -> (InertialParams, [f64; 4]) {
        let (theta, p) = self.final_belief.param_estimate();
        (theta, [p[(0, 0)], p[(1, 1)], p[(2, 2)], p[(3, 3)]])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Parses a trace CSV back into rows.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
