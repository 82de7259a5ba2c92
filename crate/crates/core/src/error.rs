use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not positive definite ({context}) after jitter escalation")]
    NotPositiveDefinite { context: &'static str },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("format error in {path:?}: {message}")]
    Format { path: Option<PathBuf>, message: String },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFiniteValue {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    #[error("black-box executable failed on row {row} (exit code {code:?}): {stderr}")]
    SubprocessFailure {
        row: usize,
        code: Option<i32>,
        stderr: String,
    },

    #[error("black-box executable timed out on row {row} after {seconds} s")]
    Timeout { row: usize, seconds: f64 },

    #[error("requested {k} sensors but only {sensors} candidates exist")]
    KExceedsSensors { k: usize, sensors: usize },

    #[error("brute-force enumeration of {count} designs exceeds the limit of {limit}")]
    CombinatorialBlowup { count: u128, limit: u128 },

    #[error("forward solver failed: {0}")]
    SolverFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(path: Option<&std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.map(|p| p.to_path_buf()),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: Option<&std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.map(|p| p.to_path_buf()),
            source,
        }
    }
}
