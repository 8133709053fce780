//! Box-constrained first-order solver shared by the local planner and the MPC.
//!
//! Each iteration tries a projected Newton step (Bertsekas-style active set)
//! when the objective supplies a curvature model, then falls back to a
//! projected gradient step with a Barzilai-Borwein length. Both use a
//! monotone Armijo backtracking search along the projection arc, so the
//! returned iterate never has a higher cost than the initial guess.

use nalgebra::{DMatrix, DVector};

/// Objective over a flat decision vector.
pub trait Objective {
    fn cost(&mut self, x: &[f64]) -> f64;
    /// Cost and gradient at `x`.
    fn cost_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>);
    /// Symmetric positive semidefinite curvature model at `x`, if available.
    fn curvature(&mut self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop when the projected-gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the cost by at most `cost_tol * max(1, |f|)`.
    pub cost_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 200, grad_tol: 1e-4, cost_tol: 1e-8, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum StopReason {
    Gradient,
    CostStall,
    MaxIterations,
    LineSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl Solution {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::Gradient | StopReason::CostStall)
    }
}

pub fn project(x: &mut [f64], bound: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(-bound, bound);
    }
}

/// `|P(x - g) - x|`, zero exactly at box-constrained stationary points.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], bound: f64) -> f64 {
    x.iter().zip(g).map(|(xi, gi)| ((xi - gi).clamp(-bound, bound) - xi).powi(2)).sum::<f64>().sqrt()
}

/// Minimizes `obj` over the box `|x_i| <= bound` starting from `x0`
/// (projected onto the box first).
pub fn minimize_box<O: Objective>(obj: &mut O, x0: &[f64], bound: f64, settings: &SolverSettings) -> Solution {
    let mut x = x0.to_vec();
    project(&mut x, bound);
    let (mut f, mut g) = obj.cost_gradient(&x);
    let initial_cost = f;
    let mut alpha = initial_step(&g, bound);
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        if projected_gradient_norm(&x, &g, bound) <= settings.grad_tol {
            stop = StopReason::Gradient;
            break;
        }
        iterations += 1;

        let mut directions = Vec::with_capacity(2);
        if let Some(h) = obj.curvature(&x) {
            directions.extend(newton_direction(&h, &x, &g, bound));
        }
        directions.push(g.iter().map(|gi| -alpha * gi).collect::<Vec<f64>>());

        let accepted = directions.iter().find_map(|d| line_search(obj, &x, f, &g, d, bound, settings));
        let Some((x_new, f_new)) = accepted else {
            stop = StopReason::LineSearch;
            break;
        };

        let (f_eval, g_new) = obj.cost_gradient(&x_new);
        debug_assert!((f_eval - f_new).abs() <= 1e-9 * f_new.abs().max(1.0));
        let decrease = f - f_eval;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { initial_step(&g_new, bound) };

        x = x_new;
        f = f_eval;
        g = g_new;
        if decrease <= settings.cost_tol * f.abs().max(1.0) {
            stop = StopReason::CostStall;
            break;
        }
    }
    Solution { x, cost: f, initial_cost, iterations, stop }
}

/// Backtracks along `P(x + t d)` from `t = 1` until the Armijo condition holds
/// with a strict decrease.
fn line_search<O: Objective>(
    obj: &mut O,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    bound: f64,
    settings: &SolverSettings,
) -> Option<(Vec<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..=settings.max_backtracks {
        let mut trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
        project(&mut trial, bound);
        let directional: f64 = g.iter().zip(trial.iter().zip(x)).map(|(gi, (ti, xi))| gi * (ti - xi)).sum();
        let ft = obj.cost(&trial);
        if ft.is_finite() && ft < f && ft <= f + settings.armijo * directional {
            return Some((trial, ft));
        }
        t *= 0.5;
    }
    None
}

/// Newton direction on the free variables, scaled gradient on the active ones.
///
/// A variable is active when it sits within `delta` of a bound and the
/// gradient pushes it outward.
fn newton_direction(h: &DMatrix<f64>, x: &[f64], g: &[f64], bound: f64) -> Option<Vec<f64>> {
    let n = x.len();
    let delta = projected_gradient_norm(x, g, bound).min(1e-2 * bound);
    let active: Vec<bool> =
        (0..n).map(|i| (x[i] <= -bound + delta && g[i] > 0.0) || (x[i] >= bound - delta && g[i] < 0.0)).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();

    let mut d = vec![0.0; n];
    for i in (0..n).filter(|&i| active[i]) {
        d[i] = -g[i] / h[(i, i)].max(1e-12);
    }
    if free.is_empty() {
        return Some(d);
    }
    let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let gf = DVector::from_fn(free.len(), |a, _| g[free[a]]);
    let scale = hff.diagonal().amax().max(1e-12);
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut reg = hff.clone();
        for a in 0..free.len() {
            reg[(a, a)] += damping;
        }
        if let Some(ch) = reg.cholesky() {
            let step = ch.solve(&gf);
            if step.iter().all(|v| v.is_finite()) {
                for (a, &i) in free.iter().enumerate() {
                    d[i] = -step[a];
                }
                return Some(d);
            }
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 100.0 };
    }
    None
}

/// Step that moves the largest gradient component a quarter of the box.
fn initial_step(g: &[f64], bound: f64) -> f64 {
    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if gmax > 0.0 {
        0.25 * bound / gmax
    } else {
        1.0
    }
}
