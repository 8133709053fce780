//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.
//!
//! Oracles here are written independently of the library code they check:
//! finite differences, closed-form double-integrator propagation, brute-force
//! grid search and byte comparison of repeated CLI runs.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rattle::dynamics::{BodyWrench, FreeflyerModel, FreeflyerState, InertialParams};
use rattle::estimation::EkfBelief;
use rattle::global_plan::{plan_global, GlobalPlan, GoalRegion, RrtConfig};
use rattle::harness::{check_trace, compare_informative, run_scenario, ScenarioConfig};
use rattle::information::{fim_rollout, NoiseModel};
use rattle::local_plan::{plan_local, CostWeights, LocalPlannerConfig};
use rattle::world::{random_world, ObstacleWorld, RandomWorldSpec};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenario_path(name)).expect("shipped scenario loads")
}

fn random_theta(rng: &mut ChaCha8Rng) -> InertialParams {
    InertialParams {
        m: rng.random_range(1.0..50.0),
        cx: rng.random_range(-0.3..0.3),
        cy: rng.random_range(-0.3..0.3),
        izz: rng.random_range(0.05..2.0),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> FreeflyerState {
    FreeflyerState {
        rx: rng.random_range(-2.0..2.0),
        ry: rng.random_range(-2.0..2.0),
        phi: rng.random_range(-3.0..3.0),
        vx: rng.random_range(-0.5..0.5),
        vy: rng.random_range(-0.5..0.5),
        omega: rng.random_range(-0.5..0.5),
    }
}

fn random_wrench(rng: &mut ChaCha8Rng, f: f64, t: f64) -> BodyWrench {
    BodyWrench::new(rng.random_range(-f..f), rng.random_range(-f..f), rng.random_range(-t..t))
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_acc = 0.0_f64;
    let mut worst_det = 0.0_f64;
    for _ in 0..1000 {
        let mut theta = random_theta(&mut rng);
        let x = random_state(&mut rng);
        let u = random_wrench(&mut rng, 0.4, 0.1);

        // the mass matrix written out by hand
        let (m, cx, cy, izz) = (theta.m, theta.cx, theta.cy, theta.izz);
        let mm = Matrix3::new(m, 0.0, -m * cy, 0.0, m, m * cx, -m * cy, m * cx, izz + m * (cx * cx + cy * cy));
        worst_det = worst_det.max((mm.determinant() - m * m * izz).abs() / (m * m * izz));
        let lib = FreeflyerModel::new(theta).mass_matrix();
        worst_det = worst_det.max((lib.determinant() - m * m * izz).abs() / (m * m * izz));

        theta.cx = 0.0;
        theta.cy = 0.0;
        let a = FreeflyerModel::new(theta).acceleration(&x, &u);
        let expect = Vector3::new(u.fx / theta.m, u.fy / theta.m, u.tau / theta.izz);
        worst_acc = worst_acc.max((a - expect).amax());
    }
    let msg = format!("max accel error {worst_acc:.2e}, max det rel error {worst_det:.2e}");
    if worst_acc <= 1e-12 && worst_det <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for draw in 0..100 {
        let theta = random_theta(&mut rng);
        let model = FreeflyerModel::with_coriolis(theta, draw % 2 == 1);
        let x = random_state(&mut rng).to_vector();
        let u = random_wrench(&mut rng, 0.4, 0.1).to_vector();
        let jac = model.jacobians_vec(&x, &u);

        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let fd = (model.derivative_vec(&xp, &u) - model.derivative_vec(&xm, &u)) / (2.0 * h);
            for i in 0..6 {
                worst = worst.max(rel_err(jac.a[(i, j)], fd[i]));
            }
        }
        for j in 0..3 {
            let h = 1e-6;
            let (mut up, mut um) = (u, u);
            up[j] += h;
            um[j] -= h;
            let fd = (model.derivative_vec(&x, &up) - model.derivative_vec(&x, &um)) / (2.0 * h);
            for i in 0..6 {
                worst = worst.max(rel_err(jac.b[(i, j)], fd[i]));
            }
        }
        let tv = theta.to_vector();
        for j in 0..4 {
            let h = 1e-6 * tv[j].abs().max(1.0);
            let (mut tp, mut tm) = (tv, tv);
            tp[j] += h;
            tm[j] -= h;
            let f = |t| {
                FreeflyerModel::with_coriolis(InertialParams::from_vector(&t), model.coriolis()).derivative_vec(&x, &u)
            };
            let fd = (f(tp) - f(tm)) / (2.0 * h);
            for i in 0..6 {
                worst = worst.max(rel_err(jac.g[(i, j)], fd[i]));
            }
        }
    }
    let msg = format!("max relative deviation {worst:.2e} over 100 draws");
    if worst <= 1e-5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let noise = NoiseModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut problems = Vec::new();
    for traj in 0..100 {
        let model = FreeflyerModel::new(random_theta(&mut rng));
        let x0 = random_state(&mut rng).to_vector();
        let n = rng.random_range(5..40);
        let inputs: Vec<Vector3<f64>> = (0..n).map(|_| random_wrench(&mut rng, 0.4, 0.1).to_vector()).collect();
        let roll = fim_rollout(&model, &x0, &inputs, 0.5, &noise);
        let mut prev = 0.0;
        for f in &roll.partial {
            let scale = f.amax().max(1.0);
            let min_eig = f.symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-9 * scale || (f - f.transpose()).amax() > 1e-9 * scale {
                problems.push(format!("trajectory {traj}: not PSD (min eig {min_eig:.3e})"));
            }
            if f.trace() < prev {
                problems.push(format!("trajectory {traj}: trace decreased"));
            }
            prev = f.trace();
        }
    }

    let model = FreeflyerModel::new(InertialParams::COMBINED_SIM);
    let rest = Vector6::zeros();
    let zero = fim_rollout(&model, &rest, &vec![Vector3::zeros(); 30], 0.5, &noise).fim().f;
    if zero.amax() != 0.0 {
        problems.push(format!("zero excitation gave |F| = {:.3e}", zero.amax()));
    }

    let centered = FreeflyerModel::new(InertialParams::ASTROBEE_SIM);
    let pushes: Vec<Vector3<f64>> = (0..30).map(|k| Vector3::new(0.3 * (k as f64 * 0.4).sin(), -0.2, 0.0)).collect();
    let f = fim_rollout(&centered, &rest, &pushes, 0.5, &noise).fim().f;
    let izz_block = (0..4).map(|i| f[(3, i)].abs().max(f[(i, 3)].abs())).fold(0.0, f64::max);
    if izz_block != 0.0 || f[(0, 0)] <= 0.0 {
        problems.push(format!("translation only: izz row/column {izz_block:.3e}, F_mm {:.3e}", f[(0, 0)]));
    }

    if problems.is_empty() {
        Ok("100 trajectories PSD and trace-monotone; no excitation gives F = 0; translation leaves izz unobserved"
            .into())
    } else {
        Err(problems.join("; "))
    }
}

fn criterion_4() -> Outcome {
    let truth = InertialParams::COMBINED_SIM;
    let model = FreeflyerModel::new(truth);
    let noise = NoiseModel::default();
    let dt = 0.1;
    let mut x = FreeflyerState::at_rest(0.0, 0.0, 0.0);
    let mut belief = EkfBelief::new(&x, &noise.sigma_r, &InertialParams::ASTROBEE_SIM, &[25.0, 0.01, 0.01, 0.25]);
    let mut trace_increases = 0;
    for k in 0..=600 {
        let before = belief.cov.trace();
        belief = belief.update(&x, &noise).map_err(|e| e.to_string())?;
        if belief.cov.trace() > before {
            trace_increases += 1;
        }
        let t = k as f64 * dt;
        let two_pi = std::f64::consts::TAU;
        let u = BodyWrench::new(
            0.3 * (two_pi * t / 10.0).sin(),
            0.3 * (two_pi * t / 14.0).cos(),
            0.05 * (two_pi * t / 8.0).sin(),
        );
        if k < 600 {
            x = model.step(&x, &u, dt);
            belief = belief.predict(&u, dt, &noise, false);
        }
    }
    let est = belief.theta();
    let m_err = (est.m - truth.m).abs() / truth.m;
    let izz_err = (est.izz - truth.izz).abs() / truth.izz;
    let msg = format!(
        "m {:.3} ({:.2}%), izz {:.4} ({:.2}%), trace increases {trace_increases}, clamps {}",
        est.m,
        m_err * 100.0,
        est.izz,
        izz_err * 100.0,
        belief.clamp_count
    );
    if m_err <= 0.02 && izz_err <= 0.05 && trace_increases == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Independent check of a global plan: exact re-propagation of every edge,
/// dense collision sampling, bounds, force and velocity limits, goal entry.
fn validate_plan(
    plan: &GlobalPlan,
    world: &ObstacleWorld,
    start: [f64; 2],
    goal: &GoalRegion,
    cfg: &RrtConfig,
) -> Result<(), String> {
    let first = plan.nodes.first().ok_or("empty plan")?;
    if first.p != start || first.v != [0.0; 2] {
        return Err("plan does not start at the start state".into());
    }
    let free = |p: [f64; 2]| {
        world.bounds.contains(p)
            && world
                .obstacles
                .iter()
                .all(|o| (p[0] - o.center[0]).hypot(p[1] - o.center[1]) > o.radius + world.inflation)
    };
    let mut total = 0.0;
    for (i, pair) in plan.nodes.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.parent != Some(i) {
            return Err(format!("node {} does not follow its parent", i + 1));
        }
        if b.action.iter().any(|f| f.abs() > cfg.u_max + 1e-12) || b.duration.is_nan() || b.duration <= 0.0 {
            return Err(format!("edge {i} violates the force limit or has no duration"));
        }
        let acc = [b.action[0] / plan.mass, b.action[1] / plan.mass];
        let at = |t: f64| {
            (
                [a.p[0] + a.v[0] * t + 0.5 * acc[0] * t * t, a.p[1] + a.v[1] * t + 0.5 * acc[1] * t * t],
                [a.v[0] + acc[0] * t, a.v[1] + acc[1] * t],
            )
        };
        let (p_end, v_end) = at(b.duration);
        let defect = (0..2).map(|j| (p_end[j] - b.p[j]).abs().max((v_end[j] - b.v[j]).abs())).fold(0.0, f64::max);
        if defect > 1e-9 {
            return Err(format!("edge {i} does not re-propagate (defect {defect:.2e})"));
        }
        if b.v.iter().any(|v| v.abs() > cfg.v_max + 1e-9) {
            return Err(format!("node {} exceeds the velocity limit", i + 1));
        }
        const SAMPLES: usize = 2000;
        for s in 0..=SAMPLES {
            let p = at(b.duration * s as f64 / SAMPLES as f64).0;
            if !free(p) {
                return Err(format!("edge {i} collides at ({:.3}, {:.3})", p[0], p[1]));
            }
        }
        total += b.duration;
    }
    if (total - plan.total_time).abs() > 1e-9 {
        return Err("total time does not match the edge durations".into());
    }
    let last = plan.nodes.last().unwrap();
    let dp = (last.p[0] - goal.center[0]).hypot(last.p[1] - goal.center[1]);
    if dp > goal.tolerance || last.v[0].hypot(last.v[1]) > goal.velocity_tolerance {
        return Err("plan does not end in the goal region".into());
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let spec = RandomWorldSpec::default();
    let goal = GoalRegion::new(spec.goal);
    let cfg = RrtConfig { time_budget_s: Some(20.0), ..RrtConfig::default() };
    let mut times = Vec::new();
    let mut ok = 0;
    let mut failures = Vec::new();
    for seed in 0..50 {
        let world = random_world(&spec, seed);
        let started = Instant::now();
        let result = plan_global(spec.start, [0.0; 2], &goal, &world, &InertialParams::ASTROBEE_SIM, &cfg, seed);
        times.push(started.elapsed().as_secs_f64());
        match result.map_err(|e| e.to_string()).and_then(|p| validate_plan(&p, &world, spec.start, &goal, &cfg)) {
            Ok(()) => ok += 1,
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    times.sort_by(f64::total_cmp);
    let median = (times[24] + times[25]) / 2.0;
    let msg = format!(
        "{ok}/50 valid plans, median solve {median:.3} s{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    if ok >= 48 && median < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_6() -> Outcome {
    let theta = InertialParams::ASTROBEE_SIM;
    let cfg = LocalPlannerConfig::default();
    let w = CostWeights { r: [1.0; 3], ..CostWeights::default() };
    let dt = cfg.dt_knot;
    let target = 0.05;
    let plan = plan_local(
        &FreeflyerState::default(),
        &theta,
        &FreeflyerState::at_rest(target, 0.0, 0.0),
        &w,
        None,
        2,
        &cfg,
        &NoiseModel::default(),
        None,
    )
    .map_err(|e| e.to_string())?;

    // two held forces on a 1-D double integrator, integrated in closed form
    let cost = |u0: f64, u1: f64| {
        let (mut p, mut v, mut c) = (0.0, 0.0, 0.0);
        for u in [u0, u1] {
            c += w.q[0] * (p - target).powi(2) + w.q[3] * v * v + w.r[0] * u * u;
            p += v * dt + 0.5 * u / theta.m * dt * dt;
            v += u / theta.m * dt;
        }
        c + w.q_f[0] * (p - target).powi(2) + w.q_f[3] * v * v
    };
    let (mut lo, mut hi) = ([-cfg.u_max; 2], [cfg.u_max; 2]);
    let mut best = (f64::INFINITY, [0.0; 2]);
    for _ in 0..4 {
        for i in 0..=200 {
            for j in 0..=200 {
                let a = lo[0] + (hi[0] - lo[0]) * i as f64 / 200.0;
                let b = lo[1] + (hi[1] - lo[1]) * j as f64 / 200.0;
                let c = cost(a, b);
                if c < best.0 {
                    best = (c, [a, b]);
                }
            }
        }
        let half = [(hi[0] - lo[0]) / 100.0, (hi[1] - lo[1]) / 100.0];
        lo = [(best.1[0] - half[0]).max(-cfg.u_max), (best.1[1] - half[1]).max(-cfg.u_max)];
        hi = [(best.1[0] + half[0]).min(cfg.u_max), (best.1[1] + half[1]).min(cfg.u_max)];
    }
    let dev = (plan.achieved_cost - best.0).abs() / best.0;
    let msg =
        format!("planner cost {:.6e}, grid optimum {:.6e}, deviation {:.3}%", plan.achieved_cost, best.0, dev * 100.0);
    if dev <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7() -> Outcome {
    let cfg = scenario("payload_transfer.toml");
    let s = compare_informative(&cfg, 20).map_err(|e| e.to_string())?;
    let pct = s.percent_change;
    let msg = format!("{} matched pairs, izz variance {:+.1}%, mass variance {:+.1}%", s.matched_pairs, pct.izz, pct.m);
    if s.matched_pairs >= 10 && pct.izz <= -20.0 && pct.m.abs() <= 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Outcome {
    let cfg = scenario("room_transfer.toml");
    let trace = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let violations = check_trace(&trace, &cfg);
    let wrench = trace.max_abs_wrench();
    let d = trace.duration();
    let expected = |period: f64| (d / period + 1e-9).floor() as usize;
    let (replans, updates) = (trace.replan_count(), trace.model_update_count());
    let schedule_ok =
        replans == expected(cfg.rates.replan_period) && updates == expected(cfg.rates.model_update_period);
    let msg = format!(
        "goal reached at {d:.1} s, {} violations, max |u| {wrench:.3}, {replans} replans and {updates} model updates",
        violations.len()
    );
    if violations.is_empty() && wrench <= 0.4 + 1e-12 && schedule_ok && d <= cfg.max_sim_time {
        Ok(msg)
    } else {
        Err(format!("{msg}: {}", violations.join("; ")))
    }
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_rattle"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("`rattle {}` failed", args.join(" ")))
    }
}

fn criterion_9() -> Outcome {
    let hop = scenario_path("short_hop.toml");
    let payload = scenario_path("payload_transfer.toml");
    let (hop, payload) = (hop.to_str().unwrap(), payload.to_str().unwrap());
    let commands: [(&[&str], &[&str]); 4] = [
        (&["plan-global", "--scenario", payload], &["global_plan.json"]),
        (&["run", "--scenario", hop], &["trace.csv", "run.json"]),
        (&["montecarlo", "--runs", "3", "--scenario", hop], &["summary.json"]),
        (&["compare", "--runs", "2", "--scenario", hop], &["compare.json"]),
    ];
    let mut compared = 0;
    for (args, files) in commands {
        let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
        for d in &dirs {
            run_cli(args, d.path())?;
        }
        for f in files {
            let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
            let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
            if a != b {
                return Err(format!("`rattle {}` wrote different {f} on repeat", args[0]));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across repeated runs of 4 commands"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("dynamics", criterion_1),
        ("jacobians", criterion_2),
        ("fisher information", criterion_3),
        ("estimator convergence", criterion_4),
        ("global planner", criterion_5),
        ("local planner optimality", criterion_6),
        ("information effect", criterion_7),
        ("end-to-end room transfer", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check();
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("criterion {} ({name}): PASS [{secs:.1} s] {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1} s] {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
