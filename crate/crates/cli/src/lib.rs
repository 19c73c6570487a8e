//! Command line front end for panoptic part evaluation, fusion, substitution
//! analysis and the seeded decoder simulator.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod evaluate;
pub mod files;
pub mod merge;
pub mod oracle;
pub mod report;
pub mod simulate;

/// Failures mapped onto the stable process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 2: an input file or directory is missing, or directories do not
    /// pair up.
    #[error("{0}")]
    MissingInput(String),
    /// Exit 3: an input exists but cannot be parsed or is inconsistent.
    #[error("{0}")]
    Format(String),
    /// Exit 4: a numeric invariant was violated.
    #[error("{0}")]
    Invariant(String),
    /// Exit 64: bad command-line usage.
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Format(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Usage(_) => 64,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pps", version, about = "Panoptic part segmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a prediction directory against ground truth
    Evaluate(evaluate::EvaluateArgs),
    /// Fuse a panoptic map with a part map
    Merge(merge::MergeArgs),
    /// Re-evaluate with either component replaced by ground truth
    Oracle(oracle::OracleArgs),
    /// Run the seeded decoder simulator and its invariant checks
    Simulate(simulate::SimulateArgs),
}

/// Parses and runs a full command line, returning the process exit code.
/// Help and version requests exit 0; other parse problems exit 64.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Evaluate(args) => evaluate::cmd_evaluate(args).map(|_| ()),
        Command::Merge(args) => merge::cmd_merge(args),
        Command::Oracle(args) => oracle::cmd_oracle(args).map(|_| ()),
        Command::Simulate(args) => simulate::cmd_simulate(args).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
