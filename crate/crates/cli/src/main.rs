//! `pte`: simulations, scoring and reputation replay from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pte_core::scoring::Mechanism;

#[derive(Parser, Debug)]
#[command(name = "pte", version, about = "Peer-prediction scoring and incentive simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run incentive experiments and convergence curves from a config file.
    Simulate(Common),
    /// Current accuracy score of every rating in an event log.
    Score(LogArgs),
    /// Recompute every user's reputation from an event log.
    Replay(LogArgs),
    /// Train a benchmark forest on the finalized ratings of an event log.
    TrainBenchmark(LogArgs),
    /// Summarize the contents of an event log.
    Report(LogArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Overrides the scoring mechanism.
    #[arg(long)]
    mechanism: Option<Mechanism>,
}

#[derive(Args, Debug, Clone)]
pub struct LogArgs {
    /// Event log, one JSON record per line.
    #[arg(long)]
    log: PathBuf,
    /// Forest file for augmented scoring.
    #[arg(long)]
    forest: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

/// An error together with its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub const RUNTIME: u8 = 1;
    pub const CONFIG: u8 = 2;

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: Self::CONFIG, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: Self::RUNTIME, error: error.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PTE_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Score(a) => commands::score(a),
        Command::Replay(a) => commands::replay(a),
        Command::TrainBenchmark(a) => commands::train_benchmark(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
