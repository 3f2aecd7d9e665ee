//! `fks` — experiment runner for free knot splines and shallow ReLU networks.
//!
//! Every subcommand writes plain CSV (one header line) under `--out` and
//! prints a short summary on stdout; diagnostics go to stderr. Exit codes:
//! 0 on success, 2 for an invalid configuration, 1 when a computation fails.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{CommonArgs, Defaults, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] fks::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(fks::Error::UnknownTarget(_) | fks::Error::InvalidParameter(_)) => 2,
            CliError::Run(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fks", version, about = "Free knot spline and shallow ReLU approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train (or build) one model at a single N.
    Run(CommonArgs),
    /// Run a pipeline over several N and fit the convergence slope.
    Sweep(CommonArgs),
    /// Reproduce the spline comparison table for x^(2/3).
    Table1(CommonArgs),
    /// Condition numbers of the mass, T and M T^-1 matrices.
    Cond(CommonArgs),
    /// Emit optimal knots from the equidistribution ODE.
    Mesh(CommonArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let sweep_ns = || vec![16, 32, 64, 128, 256];
    match command {
        Command::Run(args) => commands::cmd_run(&ExperimentConfig::resolve(&args, Defaults { n_list: vec![16] })?),
        Command::Sweep(args) => {
            commands::cmd_sweep(&ExperimentConfig::resolve(&args, Defaults { n_list: sweep_ns() })?).map(drop)
        }
        Command::Table1(args) => {
            commands::cmd_table1(&ExperimentConfig::resolve(&args, Defaults { n_list: vec![16, 32, 64] })?).map(drop)
        }
        Command::Cond(args) => {
            let ns = vec![8, 16, 32, 64, 128, 256, 512];
            commands::cmd_cond(&ExperimentConfig::resolve(&args, Defaults { n_list: ns })?).map(drop)
        }
        Command::Mesh(args) => {
            commands::cmd_mesh(&ExperimentConfig::resolve(&args, Defaults { n_list: vec![16] })?).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
