//! `pepbcd`: worst-case bounds of block coordinate methods from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pepbcd::PepError;

use commands::{DescentArgs, RacdArgs, SweepArgs, VerifyArgs};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "pepbcd", version, about = "Worst-case bounds of block coordinate methods")]
struct Cli {
    /// JSON file with experiment settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Worst-case value of one method.
    Bound {
        #[command(flatten)]
        exp: ExperimentConfig,
    },
    /// Worst-case values along one axis.
    Sweep {
        #[command(flatten)]
        exp: ExperimentConfig,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Optimal two-cycle descent constant and the semi-analytic bound table.
    DescentLemma {
        #[command(flatten)]
        exp: ExperimentConfig,
        #[command(flatten)]
        args: DescentArgs,
    },
    /// Randomized accelerated method against every fixed block sequence.
    RacdCompare {
        #[command(flatten)]
        exp: ExperimentConfig,
        #[command(flatten)]
        args: RacdArgs,
    },
    /// Run the invariant check suite.
    Verify {
        #[command(flatten)]
        exp: ExperimentConfig,
        #[command(flatten)]
        args: VerifyArgs,
    },
    /// Write the SDP in SDPA sparse format and print its size.
    Export {
        #[command(flatten)]
        exp: ExperimentConfig,
    },
}

fn run(cli: &Cli) -> pepbcd::Result<bool> {
    let load = |exp: &ExperimentConfig| ExperimentConfig::load(cli.config.as_ref(), exp);
    match &cli.command {
        Command::Bound { exp } => commands::bound(&load(exp)?),
        Command::Sweep { exp, args } => commands::sweep(&load(exp)?, args),
        Command::DescentLemma { exp, args } => commands::descent_lemma(&load(exp)?, args),
        Command::RacdCompare { exp, args } => commands::racd(&load(exp)?, args),
        Command::Verify { exp, args } => commands::verify(&load(exp)?, args),
        Command::Export { exp } => commands::export(&load(exp)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PepError::InvalidInput(_) | PepError::Refused(_) | PepError::Parse(_) | PepError::Json(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}
