//! Planar obstacle worlds: a rectangular workspace with circular obstacles.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world bounds are degenerate")]
    DegenerateBounds,
    #[error("obstacle {0} has a non-positive or non-finite radius")]
    BadRadius(usize),
    #[error("inflation must be finite and non-negative")]
    BadInflation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Workspace bounds and circular obstacles; every obstacle is grown by
/// `inflation` (the robot radius) for collision purposes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleWorld {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    #[serde(default)]
    pub inflation: f64,
}

impl ObstacleWorld {
    pub fn empty(bounds: Bounds) -> Self {
        Self { bounds, obstacles: Vec::new(), inflation: 0.0 }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let b = &self.bounds;
        let finite = b.min.iter().chain(b.max.iter()).all(|v| v.is_finite());
        if !finite || b.max[0] <= b.min[0] || b.max[1] <= b.min[1] {
            return Err(WorldError::DegenerateBounds);
        }
        if !(self.inflation.is_finite() && self.inflation >= 0.0) {
            return Err(WorldError::BadInflation);
        }
        for (i, c) in self.obstacles.iter().enumerate() {
            if !(c.radius.is_finite() && c.radius > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
                return Err(WorldError::BadRadius(i));
            }
        }
        Ok(())
    }

    /// Signed distance from `p` to the nearest inflated obstacle boundary
    /// (negative inside). `f64::INFINITY` when there are no obstacles.
    pub fn clearance(&self, p: [f64; 2]) -> f64 {
        self.obstacles.iter().map(|c| dist(p, c.center) - c.radius - self.inflation).fold(f64::INFINITY, f64::min)
    }

    pub fn in_collision(&self, p: [f64; 2]) -> bool {
        self.clearance(p) < 0.0
    }

    pub fn is_free(&self, p: [f64; 2]) -> bool {
        self.bounds.contains(p) && !self.in_collision(p)
    }

    /// Fraction of the bounds covered by inflated obstacles, estimated on a grid.
    pub fn coverage(&self, resolution: f64) -> f64 {
        let grid = Grid::new(self, resolution);
        let blocked = grid.cells().filter(|&(_, p)| self.in_collision(p)).count();
        blocked as f64 / (grid.nx * grid.ny) as f64
    }

    /// Whether `a` and `b` are joined by free grid cells (4-connectivity).
    pub fn connected(&self, a: [f64; 2], b: [f64; 2], resolution: f64) -> bool {
        let grid = Grid::new(self, resolution);
        let (Some(start), Some(goal)) = (grid.index_of(a), grid.index_of(b)) else {
            return false;
        };
        let free: Vec<bool> = grid.cells().map(|(_, p)| !self.in_collision(p)).collect();
        if !free[start] || !free[goal] {
            return false;
        }
        let mut seen = vec![false; free.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            if i == goal {
                return true;
            }
            let (ix, iy) = (i % grid.nx, i / grid.nx);
            let mut push = |j: usize| {
                if free[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if ix > 0 {
                push(i - 1);
            }
            if ix + 1 < grid.nx {
                push(i + 1);
            }
            if iy > 0 {
                push(i - grid.nx);
            }
            if iy + 1 < grid.ny {
                push(i + grid.nx);
            }
        }
        false
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

struct Grid {
    origin: [f64; 2],
    res: f64,
    nx: usize,
    ny: usize,
}

impl Grid {
    fn new(world: &ObstacleWorld, res: f64) -> Self {
        let b = &world.bounds;
        let nx = ((b.max[0] - b.min[0]) / res).ceil().max(1.0) as usize;
        let ny = ((b.max[1] - b.min[1]) / res).ceil().max(1.0) as usize;
        Self { origin: b.min, res, nx, ny }
    }

    fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.origin[0] + (ix as f64 + 0.5) * self.res, self.origin[1] + (iy as f64 + 0.5) * self.res]
    }

    fn cells(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        (0..self.nx * self.ny).map(move |i| (i, self.center(i % self.nx, i / self.nx)))
    }

    fn index_of(&self, p: [f64; 2]) -> Option<usize> {
        let fx = ((p[0] - self.origin[0]) / self.res).floor();
        let fy = ((p[1] - self.origin[1]) / self.res).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(fy as usize * self.nx + fx as usize)
    }
}

/// Recipe for randomized cluttered benchmark worlds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWorldSpec {
    pub bounds: Bounds,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Target fraction of the bounds covered by inflated obstacles.
    pub density: f64,
    pub radius_range: [f64; 2],
    pub inflation: f64,
    /// Obstacle-free radius kept around start and goal.
    pub keepout: f64,
}

impl Default for RandomWorldSpec {
    /// A ~2 m transfer across a 2.6 x 2.0 m table with ~30% coverage.
    fn default() -> Self {
        Self {
            bounds: Bounds { min: [0.0, 0.0], max: [2.6, 2.0] },
            start: [0.3, 1.0],
            goal: [2.3, 1.0],
            density: 0.3,
            radius_range: [0.06, 0.14],
            inflation: 0.1,
            keepout: 0.3,
        }
    }
}

/// Generates a world meeting `spec` in which start and goal are connected.
///
/// Deterministic in `seed`; disconnected draws are discarded and redrawn from
/// the same generator.
pub fn random_world(spec: &RandomWorldSpec, seed: u64) -> ObstacleWorld {
    const RES: f64 = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut world = ObstacleWorld { bounds: spec.bounds, obstacles: Vec::new(), inflation: spec.inflation };
        let mut attempts = 0;
        while world.coverage(0.05) < spec.density && attempts < 2000 {
            attempts += 1;
            let r = rng.random_range(spec.radius_range[0]..=spec.radius_range[1]);
            let c = [
                rng.random_range(spec.bounds.min[0]..spec.bounds.max[0]),
                rng.random_range(spec.bounds.min[1]..spec.bounds.max[1]),
            ];
            let reach = r + spec.inflation + spec.keepout;
            if dist(c, spec.start) < reach || dist(c, spec.goal) < reach {
                continue;
            }
            world.obstacles.push(Circle { center: c, radius: r });
        }
        if world.connected(spec.start, spec.goal, RES) {
            return world;
        }
    }
}

/// A room entered through a narrow opening, with clutter inside.
pub fn room_with_opening() -> ObstacleWorld {
    let mut obstacles = Vec::new();
    // wall at x = 1.8 with an opening centred at y = 1.5
    for k in (0..15).filter(|k| !(6..=8).contains(k)) {
        obstacles.push(Circle { center: [1.8, 0.1 + 0.2 * k as f64], radius: 0.1 });
    }
    obstacles.extend([
        Circle { center: [2.9, 0.7], radius: 0.2 },
        Circle { center: [2.7, 2.4], radius: 0.2 },
        Circle { center: [0.9, 2.3], radius: 0.25 },
    ]);
    ObstacleWorld { bounds: Bounds { min: [0.0, 0.0], max: [4.0, 3.0] }, obstacles, inflation: 0.16 }
}
