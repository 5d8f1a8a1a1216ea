use std::fmt;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod format;

use args::{Cli, Command};

/// Invalid flags or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dtphs_core::Error),
    Io(String),
    /// The structure check ran but did not pass.
    CheckFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
            CliError::CheckFailed => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) if e.is_solver_failure() => write!(f, "solver failure at {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::CheckFailed => f.write_str("structure check failed"),
        }
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<dtphs_core::Error> for CliError {
    fn from(e: dtphs_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Tableau(a) => commands::tableau(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Converge(a) => commands::converge(a),
        Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dtphs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
