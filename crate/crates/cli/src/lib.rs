//! Command-line front end for `covsel`: `simulate`, `fit`, `eval` and
//! `bench`. The binary in `main.rs` only parses arguments and maps errors
//! to exit codes; everything else lives here so it can be tested directly.

pub mod bench;
pub mod commands;
pub mod grid;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use covsel::ErrorClass;
use thiserror::Error;

pub use bench::{cmd_bench, BenchArgs, BenchOutcome};
pub use commands::{cmd_eval, cmd_fit, cmd_simulate, EvalArgs, FitArgs, SimulateArgs};
pub use grid::BenchGrid;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] covsel::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 0 success, 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
            CliError::Io { .. } | CliError::Json(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "covsel", version, about = "Sparse Gaussian graphical models by projection predictive covariance selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a true graph and a data set drawn from it.
    Simulate(SimulateArgs),
    /// Estimate a graph from a data CSV.
    Fit(FitArgs),
    /// Score an estimated precision matrix against a truth.
    Eval(EvalArgs),
    /// Run a simulation grid and aggregate the scores.
    Bench(BenchArgs),
}

/// Flags shared by the estimating subcommands.
#[derive(Debug, Clone, Args)]
pub struct SharedArgs {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads per fit (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Use the data as given instead of standardizing each column.
    #[arg(long)]
    pub no_standardize: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub(crate) fn create_file(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(covsel::Error::InvalidData("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(covsel::Error::Singular).exit_code(), 3);
        assert_eq!(CliError::Core(covsel::Error::InvalidParameter("x".into())).exit_code(), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
