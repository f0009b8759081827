//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are split between validation errors (bad inputs, incompatible
/// shapes, unmet preconditions) and runtime errors (I/O, corrupt files).
/// The CLI maps the former to exit code 2 and the latter to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series shorter than window: length {length} < window size {window}")]
    SeriesTooShort { length: usize, window: usize },

    #[error("window too short: {length} timesteps, need at least {min}")]
    WindowTooShort { length: usize, min: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("cannot form positive pair: {0}")]
    NoPositivePair(String),

    #[error("label missing: {0}")]
    LabelMissing(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code the CLI should use for this error: 2 for validation
    /// failures, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Corrupt { .. } | Error::Parse { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
