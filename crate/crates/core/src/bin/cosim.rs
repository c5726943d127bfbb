//! Scenario runner CLI.
//!
//! `cosim run <scenario.toml> [--seed N] [--t-end S] [--out DIR] [--log-level L]`
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime/solver error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cosim_core::scenario::{load_scenario, RunOverrides};
use cosim_core::{ConfigError, SimError};

#[derive(Parser)]
#[command(name = "cosim", version)]
#[command(about = "Discrete-event co-simulation of buildings, feeders, communications, and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum LogLevel {
    Quiet,
    Info,
    Debug,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write traces, event log, summary, and plots.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's end time (seconds).
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Output directory (default: `out` next to the scenario file).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "log-level", default_value = "info")]
        log_level: LogLevel,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, t_end, out, log_level } => {
            match run(scenario, seed, t_end, out, log_level) {
                Ok(()) => ExitCode::SUCCESS,
                Err(RunError::Config(e)) => {
                    eprintln!("configuration error: {e}");
                    ExitCode::from(1)
                }
                Err(RunError::Sim(e)) => {
                    eprintln!("runtime error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}

enum RunError {
    Config(ConfigError),
    Sim(SimError),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => RunError::Config(c),
            other => RunError::Sim(other),
        }
    }
}

fn run(
    scenario_path: PathBuf,
    seed: Option<u64>,
    t_end: Option<f64>,
    out: Option<PathBuf>,
    log_level: LogLevel,
) -> Result<(), RunError> {
    let scenario = load_scenario(&scenario_path)?;
    let overrides = RunOverrides { seed, t_end_s: t_end };
    if log_level >= LogLevel::Info {
        let t = overrides.t_end_s.unwrap_or(scenario.file.scenario.t_end_s);
        let s = overrides.seed.unwrap_or(scenario.file.scenario.seed);
        eprintln!("running `{}` to t = {t} s (seed {s})", scenario_path.display());
    }
    let started = std::time::Instant::now();
    let output = scenario.run(&overrides)?;
    let out_dir = out
        .unwrap_or_else(|| scenario_path.parent().unwrap_or(std::path::Path::new(".")).join("out"));
    output.write(&out_dir).map_err(SimError::Io)?;
    if log_level >= LogLevel::Info {
        eprintln!(
            "done in {:.2} s: {} events, {} signals -> {}",
            started.elapsed().as_secs_f64(),
            output.main.events.records.len(),
            output.main.traces.series.len(),
            out_dir.display()
        );
        eprint!("{}", output.summary.to_text());
    }
    Ok(())
}
