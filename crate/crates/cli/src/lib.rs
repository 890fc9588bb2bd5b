//! `lobsim`: simulate background markets, train the execution agent,
//! evaluate policies and run benchmark sweeps.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lobsim",
    version,
    about = "Limit order book market simulator and optimal-execution experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; omitted keys take the preset defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sessions to simulate, total training episodes, or evaluation episodes per policy.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Worker threads for evaluation.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Output root directory.
    #[arg(long, env = "LOBSIM_OUT", default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run background-market sessions and export book, fill and fundamental CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Session length in seconds.
        #[arg(long)]
        duration: Option<u64>,
    },
    /// Train the DQN execution agent.
    Train {
        #[command(flatten)]
        common: Common,
        /// Initial learning rate; repeat to train one agent per value.
        #[arg(long, num_args = 1..)]
        lr: Vec<f64>,
        /// Continue from the checkpoint in the output directory up to the episode total.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate policies over seeds and write metrics, t-tests and histograms.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// rl, twap, passive, random, a comma-separated list, or all.
        #[arg(long, default_value = "all")]
        policy: String,
        /// Trained network checkpoint (required for rl).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep agent populations and compare policies in every cell.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Include the trained agent and RL-vs-baseline t-tests.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
