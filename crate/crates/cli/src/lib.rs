//! Library surface behind the `moon` binary: config parsing, checkpoint
//! persistence, report writers, and the subcommand pipelines.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod runner;

use std::fmt;

/// Process exit codes: 0 ok, 2 config, 3 numeric abort, 4 integrity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Other = 1,
    Config = 2,
    Numeric = 3,
    Integrity = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Config,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Numeric,
            message: message.into(),
        }
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Integrity,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Other,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<moon_core::Error> for CliError {
    fn from(err: moon_core::Error) -> Self {
        let code = match err {
            moon_core::Error::NumericAbort { .. } => ExitCode::Numeric,
            _ => ExitCode::Config,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}
