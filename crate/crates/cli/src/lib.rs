//! Library side of the `jscc-bounds` binary: argument types, config
//! loading, subcommands and exit-code mapping.

pub mod commands;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::commands::Table;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] jscc_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum LogBase {
    #[value(name = "e")]
    E,
    #[default]
    #[value(name = "2")]
    Two,
}

impl LogBase {
    /// Converts a quantity in nats.
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            LogBase::E => nats,
            LogBase::Two => nats / std::f64::consts::LN_2,
        }
    }

    pub fn rate_column(self) -> &'static str {
        match self {
            LogBase::E => "rate_nats",
            LogBase::Two => "rate_bits",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "jscc-bounds", version, about = "Finite-blocklength bounds for hierarchical-source JSCC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON experiment config
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// CSV output path (standard output when absent)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides master_seed from the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads, 0 for one per core
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Logarithm base for displayed rates, multipliers and gamma
    #[arg(long, global = true, value_enum, default_value_t = LogBase::Two)]
    pub log_base: LogBase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Semantic rate-distortion function over the threshold grid
    Rd,
    /// Converse bound per grid point and relaxation
    Converse,
    /// Achievability bound with its four terms
    Achieve,
    /// Monte Carlo excess-distortion estimate
    Simulate,
    /// Converse, achievability and simulation per grid point
    Sweep,
}

/// Runs one subcommand on an already-read config text.
pub fn run_text(command: Command, text: &str, seed: Option<u64>, base: LogBase) -> Result<Table, CliError> {
    let problem = config::parse(text)?.build(seed)?;
    match command {
        Command::Rd => commands::cmd_rd(&problem, base),
        Command::Converse => commands::cmd_converse(&problem, base),
        Command::Achieve => commands::cmd_achieve(&problem),
        Command::Simulate => commands::cmd_simulate(&problem),
        Command::Sweep => commands::cmd_sweep(&problem, base),
    }
}

/// Full invocation: reads the config, runs on a pool of the requested size
/// and writes the CSV.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let table = pool.install(|| run_text(cli.command, &text, cli.seed, cli.log_base))?;
    match &cli.out {
        Some(out) => {
            let file = fs::File::create(out).map_err(|e| CliError::Internal(format!("{}: {e}", out.display())))?;
            table.write_csv(std::io::BufWriter::new(file))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush().map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}
