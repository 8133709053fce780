use std::path::Path;

use rattle::harness::*;

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

fn short_hop() -> ScenarioConfig {
    scenario("short_hop.toml")
}

#[test]
fn shipped_scenarios_load_and_round_trip() {
    for name in [
        "payload_transfer.toml",
        "room_transfer.toml",
        "short_hop.toml",
        "cluttered_table.toml",
        "hardware_analogue.toml",
    ] {
        let cfg = scenario(name);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/short_hop.toml")).unwrap();
    let err = ScenarioConfig::from_toml_str(&format!("{text}\n[flags2]\nx = 1\n")).unwrap_err();
    assert!(matches!(err, HarnessError::Parse(_)), "{err}");
    let err = ScenarioConfig::from_toml_str(&text.replace("[rates]", "[rates]\nreplan_hz = 1.0")).unwrap_err();
    assert!(matches!(err, HarnessError::Parse(_)), "{err}");
}

#[test]
fn invalid_values_are_rejected() {
    let mut cfg = short_hop();
    cfg.rates.replan_period = 12.05;
    assert!(matches!(cfg.validate(), Err(HarnessError::InvalidConfig(_))));
    let mut cfg = short_hop();
    cfg.theta_true.m = -1.0;
    assert!(matches!(run_scenario(&cfg), Err(HarnessError::InvalidConfig(_))));
    let mut cfg = short_hop();
    cfg.planner.mpc.weights.gamma = 1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn start_inside_goal_ends_immediately() {
    let mut cfg = short_hop();
    cfg.goal.center = [cfg.x0.rx, cfg.x0.ry];
    let trace = run_scenario(&cfg).unwrap();
    assert_eq!(trace.status, RunStatus::GoalReached);
    assert!(trace.rows.is_empty());
    assert_eq!(trace.to_csv_string().trim(), CSV_HEADER);
}

#[test]
fn closed_loop_run_is_consistent_and_deterministic() {
    let cfg = short_hop();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert_eq!(a.events, b.events);
    assert!(check_trace(&a, &cfg).is_empty(), "{:?}", check_trace(&a, &cfg));
    assert_eq!(a.final_belief.clamp_count, 0);

    let d = a.duration();
    assert_eq!(a.replan_count(), (d / cfg.rates.replan_period + 1e-9).floor() as usize);
    assert_eq!(a.model_update_count(), (d / cfg.rates.model_update_period + 1e-9).floor() as usize);

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run_scenario(&other).unwrap().to_csv_string(), a.to_csv_string());
}

#[test]
fn csv_round_trip() {
    let cfg = short_hop();
    let trace = run_scenario(&cfg).unwrap();
    let text = trace.to_csv_string();
    assert!(text.starts_with(CSV_HEADER));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), trace.rows.len());
    for (r, s) in rows.iter().zip(&trace.rows) {
        assert_eq!(TraceRecord { cov_min_eig: s.cov_min_eig, ..*r }, *s);
    }
}

#[test]
fn timeout_keeps_the_partial_trace() {
    let mut cfg = short_hop();
    cfg.max_sim_time = 3.0;
    match run_scenario(&cfg) {
        Err(HarnessError::Timeout(trace)) => {
            assert_eq!(trace.status, RunStatus::Timeout);
            assert_eq!(trace.rows.len(), 31);
            assert!(check_trace(&trace, &cfg).is_empty());
        }
        other => panic!("expected a timeout, got {other:?}"),
    }
}

#[test]
fn check_trace_flags_violations() {
    let cfg = short_hop();
    let mut trace = run_scenario(&cfg).unwrap();
    trace.rows[3].fx = 0.5;
    trace.truth[10].1.rx = -1.0;
    let found = check_trace(&trace, &cfg);
    assert_eq!(found.len(), 2, "{found:?}");
}

#[test]
fn monte_carlo_summaries() {
    let cfg = short_hop();
    let mc = monte_carlo(&cfg, 3).unwrap();
    assert_eq!(mc.n_runs, 3);
    assert_eq!(mc.failures, 0);
    assert_eq!(mc.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![cfg.seed, cfg.seed + 1, cfg.seed + 2]);
    assert!(mc.std_error.m >= 0.0 && mc.mean_p_diag.izz > 0.0);
    assert!(monte_carlo(&cfg, 0).is_err());
    assert!(compare_informative(&cfg, 1).is_err());
}

#[test]
fn single_run_set_matches_the_run() {
    let cfg = short_hop();
    let trace = run_scenario(&cfg).unwrap();
    let set = monte_carlo(&cfg, 1).unwrap();
    assert_eq!(set.runs, vec![RunSummary::from_trace(&trace)]);
    let (theta, p) = trace.final_estimate();
    assert_eq!(set.mean_error.m, theta.m - cfg.theta_true.m);
    assert_eq!(set.mean_p_diag.to_array(), p);
    assert_eq!(set.std_error, ParamValues::default());
}

#[test]
fn comparison_without_information_weight_is_neutral() {
    let mut cfg = short_hop();
    cfg.gamma0 = 0.0;
    let s = compare_informative(&cfg, 2).unwrap();
    assert_eq!(s.matched_pairs, 2);
    assert_eq!(s.nominal.runs, s.informative.runs);
    assert_eq!(s.percent_change, ParamValues::default());
}

#[test]
fn nominal_scenarios_reach_the_goal_without_clamping() {
    for name in ["payload_transfer.toml", "room_transfer.toml", "cluttered_table.toml", "hardware_analogue.toml"] {
        let cfg = scenario(name);
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.final_belief.clamp_count, 0, "{name}");
        assert!(check_trace(&trace, &cfg).is_empty(), "{name}");
    }
}
