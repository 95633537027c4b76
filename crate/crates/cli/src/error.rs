use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command layer, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] radam_core::Error),

    #[error("{0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Some records failed while the rest completed.
    #[error("{failed} of {total} records failed:\n{}", .errors.join("\n"))]
    Partial {
        failed: usize,
        total: usize,
        errors: Vec<String>,
    },

    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 validation error, 2 partial failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Partial { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
