//! `cal`: data generation, noise injection, two-stage training, sieving,
//! evaluation, theorem verification, and report aggregation.
//!
//! Exit codes: 0 success (and all checks passed), 1 validation error or
//! failed verification, 2 runtime failure. Errors are emitted as one JSON
//! object on stderr. Environment variables are never consulted; every run
//! writes a manifest that reproduces it.

mod commands;
mod manifest;

use clap::Parser;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, bad input files, failed verification.
    Validation(String),
    /// I/O failures, training divergence, internal errors.
    Runtime(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

impl From<cal_core::CalError> for CliError {
    fn from(err: cal_core::CalError) -> Self {
        use cal_core::CalError as E;
        match err {
            E::InvalidArgument(_) | E::PreconditionViolation(_) | E::Parse { .. } => {
                CliError::Validation(err.to_string())
            }
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "cal",
    about = "Covariance-assisted learning under instance-dependent label noise",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            // Help and version are successes; anything else is a usage error.
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.message(),
                "kind": err.kind(),
            });
            eprintln!("{payload}");
            err.exit_code()
        }
    }
}
