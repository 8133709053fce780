//! Kinodynamic RRT over translational states.
//!
//! The tree lives in `(position, world velocity)` space with double-integrator
//! dynamics at the nominal mass. Edges are constant-force motion primitives
//! held for a fixed duration, so every edge is dynamically feasible by
//! construction. Heading is left to the local planner.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::InertialParams;
use crate::world::{dist, ObstacleWorld, WorldError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlobalPlanError {
    #[error("free-space sampling failed {0} times in a row; the world appears fully blocked")]
    WorldFull(usize),
    #[error("no plan found after {iterations} iterations")]
    NoPlanFound { iterations: usize },
    #[error("start position is outside the free space")]
    StartInCollision,
    #[error("invalid world: {0}")]
    InvalidWorld(#[from] WorldError),
}

/// Goal region in translational state space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegion {
    pub center: [f64; 2],
    #[serde(default = "default_goal_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_goal_velocity_tolerance")]
    pub velocity_tolerance: f64,
}

fn default_goal_tolerance() -> f64 {
    0.15
}

fn default_goal_velocity_tolerance() -> f64 {
    0.05
}

impl GoalRegion {
    pub fn new(center: [f64; 2]) -> Self {
        Self { center, tolerance: default_goal_tolerance(), velocity_tolerance: default_goal_velocity_tolerance() }
    }

    pub fn contains(&self, p: [f64; 2], v: [f64; 2]) -> bool {
        dist(p, self.center) <= self.tolerance && v[0].hypot(v[1]) <= self.velocity_tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RrtConfig {
    /// Per-axis force limit of the primitives, N.
    pub u_max: f64,
    /// Per-axis velocity limit for sampling and tree nodes, m/s.
    pub v_max: f64,
    /// Primitive duration, s.
    pub dt_prim: f64,
    pub goal_bias: f64,
    /// Weight on velocity in the tree distance metric.
    pub velocity_weight: f64,
    /// Arc-length spacing of collision samples, m.
    pub resolution: f64,
    pub max_iterations: usize,
    /// Optional wall-clock cap. Plans remain deterministic only while it is not hit.
    #[serde(default)]
    pub time_budget_s: Option<f64>,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self {
            u_max: 0.4,
            v_max: 0.2,
            dt_prim: 2.0,
            goal_bias: 0.1,
            velocity_weight: 0.5,
            resolution: 0.02,
            max_iterations: 200_000,
            time_budget_s: None,
        }
    }
}

/// Tree node: translational state plus the primitive that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransNode {
    pub p: [f64; 2],
    /// World-frame velocity, m/s.
    pub v: [f64; 2],
    pub parent: Option<usize>,
    /// Constant world-frame force applied from the parent, N.
    pub action: [f64; 2],
    pub duration: f64,
}

impl TransNode {
    pub fn root(p: [f64; 2], v: [f64; 2]) -> Self {
        Self { p, v, parent: None, action: [0.0; 2], duration: 0.0 }
    }
}

/// Waypoint path from start to goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub nodes: Vec<TransNode>,
    pub total_time: f64,
    /// Nominal mass the primitives were propagated with, kg.
    pub mass: f64,
}

impl GlobalPlan {
    /// Arrival time of each node, starting at 0.
    pub fn node_times(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .scan(0.0, |t, n| {
                *t += n.duration;
                Some(*t)
            })
            .collect()
    }

    /// Translational state at time `t` along the plan, clamped to its ends.
    pub fn state_at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let mut start = 0.0;
        for pair in self.nodes.windows(2) {
            let (from, to) = (&pair[0], &pair[1]);
            if t < start + to.duration {
                let accel = [to.action[0] / self.mass, to.action[1] / self.mass];
                return propagate(from.p, from.v, accel, (t - start).max(0.0));
            }
            start += to.duration;
        }
        let last = self.nodes.last().expect("plan has at least one node");
        (last.p, last.v)
    }
}

/// Double-integrator propagation under constant acceleration.
pub fn propagate(p: [f64; 2], v: [f64; 2], accel: [f64; 2], t: f64) -> ([f64; 2], [f64; 2]) {
    let pn = [p[0] + v[0] * t + 0.5 * accel[0] * t * t, p[1] + v[1] * t + 0.5 * accel[1] * t * t];
    let vn = [v[0] + accel[0] * t, v[1] + accel[1] * t];
    (pn, vn)
}

/// The nine constant-force primitives: zero, axis-aligned and diagonal.
pub fn primitives(u_max: f64) -> [[f64; 2]; 9] {
    let mut out = [[0.0; 2]; 9];
    let mut k = 0;
    for sx in [0.0, 1.0, -1.0] {
        for sy in [0.0, 1.0, -1.0] {
            out[k] = [sx * u_max, sy * u_max];
            k += 1;
        }
    }
    out
}

/// `|dp| + w |dv|`
pub fn state_distance(p: [f64; 2], v: [f64; 2], q: [f64; 2], w: [f64; 2], velocity_weight: f64) -> f64 {
    dist(p, q) + velocity_weight * dist(v, w)
}

/// Draws a translational sample from free space, returning the goal centre
/// (at rest) with probability `goal_bias`.
pub fn sample_free<R: Rng>(
    world: &ObstacleWorld,
    goal: &GoalRegion,
    cfg: &RrtConfig,
    rng: &mut R,
) -> Result<([f64; 2], [f64; 2]), GlobalPlanError> {
    const MAX_REJECTIONS: usize = 10_000;
    if rng.random::<f64>() < cfg.goal_bias {
        return Ok((goal.center, [0.0; 2]));
    }
    let b = &world.bounds;
    for _ in 0..MAX_REJECTIONS {
        let p = [rng.random_range(b.min[0]..=b.max[0]), rng.random_range(b.min[1]..=b.max[1])];
        if world.in_collision(p) {
            continue;
        }
        let v = [rng.random_range(-cfg.v_max..=cfg.v_max), rng.random_range(-cfg.v_max..=cfg.v_max)];
        return Ok((p, v));
    }
    Err(GlobalPlanError::WorldFull(MAX_REJECTIONS))
}

/// Applies every primitive from `from` for `cfg.dt_prim` and returns the
/// child closest to `toward`. Children exceeding the velocity limit are skipped.
pub fn steer(from: &TransNode, toward: ([f64; 2], [f64; 2]), mass: f64, cfg: &RrtConfig) -> TransNode {
    let mut best: Option<(f64, TransNode)> = None;
    for action in primitives(cfg.u_max) {
        let accel = [action[0] / mass, action[1] / mass];
        let (p, v) = propagate(from.p, from.v, accel, cfg.dt_prim);
        if v[0].abs() > cfg.v_max + 1e-12 || v[1].abs() > cfg.v_max + 1e-12 {
            continue;
        }
        let d = state_distance(p, v, toward.0, toward.1, cfg.velocity_weight);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, TransNode { p, v, parent: None, action, duration: cfg.dt_prim }));
        }
    }
    best.map(|(_, n)| n).unwrap_or_else(|| {
        let (p, v) = propagate(from.p, from.v, [0.0; 2], cfg.dt_prim);
        TransNode { p, v, parent: None, action: [0.0; 2], duration: cfg.dt_prim }
    })
}

/// True iff the swept double-integrator segment stays inside the bounds and
/// outside every inflated obstacle, checked every `resolution` metres of arc.
pub fn collision_check(
    world: &ObstacleWorld,
    p: [f64; 2],
    v: [f64; 2],
    accel: [f64; 2],
    duration: f64,
    resolution: f64,
) -> bool {
    // speed along a constant-acceleration segment peaks at an endpoint
    let (_, v_end) = propagate(p, v, accel, duration);
    let peak = v[0].hypot(v[1]).max(v_end[0].hypot(v_end[1]));
    let samples = ((peak * duration / resolution).ceil() as usize).max(1);
    (0..=samples).all(|i| {
        let t = duration * i as f64 / samples as f64;
        world.is_free(propagate(p, v, accel, t).0)
    })
}

/// Grows a kinodynamic RRT from `(p0, v0)` until a node lands in `goal`.
pub fn plan_global(
    p0: [f64; 2],
    v0: [f64; 2],
    goal: &GoalRegion,
    world: &ObstacleWorld,
    theta_nominal: &InertialParams,
    cfg: &RrtConfig,
    seed: u64,
) -> Result<GlobalPlan, GlobalPlanError> {
    world.validate()?;
    if !world.is_free(p0) {
        return Err(GlobalPlanError::StartInCollision);
    }
    let root = TransNode::root(p0, v0);
    if goal.contains(p0, v0) {
        return Ok(GlobalPlan { nodes: vec![root], total_time: 0.0, mass: theta_nominal.m });
    }

    let mass = theta_nominal.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    let budget = cfg.time_budget_s.map(Duration::from_secs_f64);
    let mut tree = vec![root];

    for iteration in 0..cfg.max_iterations {
        if budget.is_some_and(|b| started.elapsed() > b) {
            return Err(GlobalPlanError::NoPlanFound { iterations: iteration });
        }
        let target = sample_free(world, goal, cfg, &mut rng)?;
        let nearest = nearest(&tree, target, cfg.velocity_weight);
        let parent = tree[nearest];
        let mut child = steer(&parent, target, mass, cfg);
        if dist(child.p, parent.p) + dist(child.v, parent.v) < 1e-12 {
            continue;
        }
        let accel = [child.action[0] / mass, child.action[1] / mass];
        if !collision_check(world, parent.p, parent.v, accel, child.duration, cfg.resolution) {
            continue;
        }
        child.parent = Some(nearest);
        tree.push(child);
        if goal.contains(child.p, child.v) {
            return Ok(extract(&tree, tree.len() - 1, mass));
        }
    }
    Err(GlobalPlanError::NoPlanFound { iterations: cfg.max_iterations })
}

fn nearest(tree: &[TransNode], target: ([f64; 2], [f64; 2]), w: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, n) in tree.iter().enumerate() {
        let d = state_distance(n.p, n.v, target.0, target.1, w);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn extract(tree: &[TransNode], leaf: usize, mass: f64) -> GlobalPlan {
    let mut chain = vec![leaf];
    while let Some(parent) = tree[*chain.last().unwrap()].parent {
        chain.push(parent);
    }
    chain.reverse();
    let nodes: Vec<TransNode> =
        chain.iter().enumerate().map(|(k, &i)| TransNode { parent: k.checked_sub(1), ..tree[i] }).collect();
    let total_time = nodes.iter().map(|n| n.duration).sum();
    GlobalPlan { nodes, total_time, mass }
}
