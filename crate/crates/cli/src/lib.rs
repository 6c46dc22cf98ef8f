//! Command-line driver: argument parsing, configuration and the five
//! commands. Exit codes: 0 success, 2 usage or validation error, 3 I/O or
//! file-format error.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use rheocast::datapipe::DataError;
use rheocast::evaluator::EvalError;
use rheocast::model::CheckpointError;
use rheocast::protocol::ProtocolError;
use rheocast::synthgen::GenError;
use rheocast::trainer::TrainError;

pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Parse { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } | DataError::Format { .. } => CliError::Io(e.to_string()),
            DataError::Protocol(p) => p.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Io { .. } => CliError::Io(e.to_string()),
            GenError::Data(d) => d.into(),
            GenError::Protocol(p) => p.into(),
            GenError::NotEmpty(_) | GenError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => d.into(),
            TrainError::Eval(ev) => (*ev).into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Data(d) => d.into(),
            EvalError::Train(t) => (*t).into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rheocast", version, about = "Fresh-concrete property prediction from mixer image sequences")]
pub struct Cli {
    /// Configuration file with [model], [train], [data], [campaign] and
    /// [eval] sections. Flags override it.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic campaign.
    Generate {
        #[arg(short = 'o', long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Campaign preset (desk or paper); overrides [campaign] preset.
        #[arg(long)]
        preset: Option<String>,
        /// Replace an existing campaign in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train one model per fold for one input combination.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'o', long)]
        out: PathBuf,
        /// Fold index or `all`.
        #[arg(long, default_value = "all")]
        fold: String,
        #[arg(long)]
        combination: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score trained checkpoints on their test folds.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Output directory of `train`.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
        /// none, per_run, all_runs or per_reference; all groupings by default.
        #[arg(long)]
        average: Option<String>,
        #[arg(long)]
        combination: Option<String>,
        /// Check the dataset layout (and checkpoints, if given) and stop.
        #[arg(long)]
        dry_run: bool,
        /// Score a perfect oracle that predicts the stored references.
        #[arg(long)]
        oracle: bool,
    },
    /// Predict properties of one run over a range of minutes.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Fold directory written by `train` (or its model.rhc).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        concrete: usize,
        #[arg(long)]
        run: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 60.0, allow_negative_numbers = true)]
        to: f64,
        #[arg(short = 'o', long)]
        out: PathBuf,
        /// Also write a vector plot.
        #[arg(long)]
        svg: bool,
    },
    /// Cross-validate every input combination.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'o', long)]
        out: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        /// Fold index or `all`.
        #[arg(long, default_value = "all")]
        fold: String,
        /// Comma-separated combination names.
        #[arg(long, value_delimiter = ',')]
        combinations: Vec<String>,
    },
}

pub fn load_config(path: Option<&std::path::Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Config::parse(&text)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    commands::dispatch(cfg, cli.command)
}
