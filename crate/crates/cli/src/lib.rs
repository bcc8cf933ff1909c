//! File formats, scenario assembly, and command implementations for the
//! feeder voltage control simulator. All numerics live in `voltsmooth-core`;
//! this crate owns parsing, plumbing, and reporting.

pub mod commands;
pub mod config;
pub mod output;
pub mod scenario;
pub mod trace;

use std::fmt;
use std::process::ExitCode;

/// Failure classes mapped to distinct process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unparseable or invalid configuration (exit 2).
    Config(String),
    /// Plant solver failure during a run (exit 3).
    Plant(String),
    /// Filesystem / IO problem (exit 4).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Plant(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(4),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Plant(m) => write!(f, "plant error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
