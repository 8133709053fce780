//! `rattle`: scenario runner for the free-flyer planning stack.
//!
//! Every command reads a TOML scenario and writes its results into `--out`.
//! Outputs depend only on the arguments, never on wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rattle::harness::{
    compare_informative, monte_carlo, plan_scenario_global, run_scenario, Event, HarnessError, RunSummary,
    ScenarioConfig, Trace,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rattle", version, about = "Information-aware planning and estimation for a planar free-flyer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the kinodynamic global plan and write `global_plan.json`.
    PlanGlobal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one closed-loop scenario and write `trace.csv` and `run.json`.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Plan without the information term.
        #[arg(long)]
        no_info: bool,
    },
    /// Run seeds `seed..seed+runs` and write `summary.json`.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: usize,
    },
    /// Matched-seed informative versus nominal study; writes `compare.json`.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: usize,
    },
}

#[derive(Serialize)]
struct CliError {
    error: &'static str,
    message: String,
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        Self { error: e.code(), message: e.to_string() }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError { error: "io_error", message: format!("{}: {e}", path.display()) }
}

#[derive(Serialize)]
struct RunReport<'a> {
    summary: RunSummary,
    global_plan_nodes: usize,
    clamp_count: u32,
    events: &'a [Event],
}

fn load(common: &Common, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(&common.scenario)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&common.out).map_err(|e| io_error(&common.out, e))?;
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))
}

fn write_run(dir: &Path, trace: &Trace) -> Result<(), CliError> {
    let path = dir.join("trace.csv");
    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
    trace.write_csv(std::io::BufWriter::new(file)).map_err(|e| io_error(&path, e))?;
    let report = RunReport {
        summary: RunSummary::from_trace(trace),
        global_plan_nodes: trace.global_plan.nodes.len(),
        clamp_count: trace.final_belief.clamp_count,
        events: &trace.events,
    };
    write_json(dir, "run.json", &report)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::PlanGlobal { common, seed } => {
            let cfg = load(&common, seed)?;
            write_json(&common.out, "global_plan.json", &plan_scenario_global(&cfg)?)
        }
        Command::Run { common, seed, no_info } => {
            let mut cfg = load(&common, seed)?;
            if no_info {
                cfg.flags.informative = false;
            }
            match run_scenario(&cfg) {
                Ok(trace) => write_run(&common.out, &trace),
                Err(HarnessError::Timeout(trace)) => {
                    // the partial run is still written before reporting failure
                    write_run(&common.out, &trace)?;
                    Err(HarnessError::Timeout(trace).into())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Montecarlo { common, runs } => {
            let cfg = load(&common, None)?;
            write_json(&common.out, "summary.json", &monte_carlo(&cfg, runs)?)
        }
        Command::Compare { common, runs } => {
            let cfg = load(&common, None)?;
            write_json(&common.out, "compare.json", &compare_informative(&cfg, runs)?)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
