//! `aia`: train, evaluate, gradient-check and compare spiking networks.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error,
//! 3 numerical divergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use aia_core::{Error, NeuronModel};
use clap::{Parser, Subcommand};

use commands::Overrides;

#[derive(Debug)]
pub enum CliError {
    Check(String),
    Usage(String),
    Diverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Check(m) | CliError::Usage(m) | CliError::Diverged(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence(_) | Error::Numeric(_) => CliError::Diverged(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "aia",
    version,
    about = "Spiking network training with association-aware gradient rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write checkpoint + metrics into a new run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model: Option<NeuronModel>,
    },
    /// Evaluate a checkpoint on the test split described by a config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Fold cached-association factors into the weights first.
        #[arg(long)]
        merge_beta: bool,
    },
    /// Compare analytic gradients with finite differences for every model.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Check a single model instead of all five.
        #[arg(long)]
        model: Option<NeuronModel>,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Weight-distribution shift and spike-count comparison of two checkpoints.
    Analyze {
        checkpoint_a: PathBuf,
        checkpoint_b: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Number of histogram bins (rounded up to an odd count).
        #[arg(long, default_value_t = 21)]
        bins: usize,
    },
    /// Generate a Poisson dataset or bin event CSVs into a dataset cache.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("AIA_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "AIA_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = threads_from_env()?;
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            model,
        } => commands::train_cmd(&config, &out, &Overrides { seed, model, threads }),
        Command::Eval {
            checkpoint,
            config,
            merge_beta,
        } => commands::eval_cmd(&checkpoint, &config, merge_beta),
        Command::Gradcheck {
            config,
            seed,
            model,
            corrupt_backward,
        } => commands::gradcheck_cmd(config.as_deref(), &Overrides { seed, model, threads }, corrupt_backward),
        Command::Analyze {
            checkpoint_a,
            checkpoint_b,
            config,
            out,
            bins,
        } => commands::analyze_cmd(&checkpoint_a, &checkpoint_b, &config, &out, bins),
        Command::GenData { config, out, seed } => commands::gen_data_cmd(
            &config,
            &out,
            &Overrides {
                seed,
                ..Default::default()
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
