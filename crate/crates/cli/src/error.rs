use std::path::PathBuf;

use riqs_core::{Assumption, Error};
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("assumption violated: {0}")]
    Assumption(Assumption),

    #[error("invariant check failed: {0}")]
    Invariant(String),

    #[error("numerical failure: {0}")]
    Numerical(Error),

    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit code: 2 config, 3 assumption, 4 invariant, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Invariant(_) | CliError::Numerical(_) => 4,
            CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::AssumptionViolated(a) => CliError::Assumption(a),
            Error::InvalidParameter { .. } | Error::ResourceLimit { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
