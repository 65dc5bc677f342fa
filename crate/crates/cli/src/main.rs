//! `plumenet`: data generation, training-set construction, training,
//! evaluation, prediction and loss reports.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numerical abort,
//! 5 I/O.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Common;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "plumenet", version, about = "Physics-informed networks for Boussinesq convection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "PLUMENET_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct Args {
    /// TOML configuration, or a `run.toml` written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seeds in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a snapshot database (manufactured solution or RB solver).
    GenData(Args),
    /// Select labels and residual points from a database.
    MakeTrainset(Args),
    /// Train a network; writes model, loss history and checkpoints.
    Train {
        #[command(flatten)]
        args: Args,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a model against a database.
    Evaluate(Args),
    /// Evaluate a model on a grid.
    Predict(Args),
    /// Summarise loss histories per cycle.
    Report(Args),
}

fn common(a: &Args, command: &str) -> Result<Common, CliError> {
    Ok(Common { source: manifest::read_config(&a.config, command)?, seed: a.seed, out: a.out.clone() })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::GenData(a) => commands::gen_data(&common(a, "gen-data")?),
        Command::MakeTrainset(a) => commands::make_trainset(&common(a, "make-trainset")?),
        Command::Train { args, resume } => commands::train(&common(args, "train")?, resume.as_deref()),
        Command::Evaluate(a) => commands::evaluate(&common(a, "evaluate")?),
        Command::Predict(a) => commands::predict(&common(a, "predict")?),
        Command::Report(a) => commands::report(&common(a, "report")?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
