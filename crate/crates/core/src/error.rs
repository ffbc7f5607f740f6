use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Each variant maps onto one stable process exit code, see [`Error::exit_code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("no JSON object found in model response")]
    NoJsonObject,

    #[error("missing or empty field `{key}` in model response")]
    MissingField { key: String },

    #[error("instruction did not match any fallback pattern: {0:?}")]
    NoMatch(String),

    #[error("endpoint error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Endpoint { status: Option<u16>, message: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("mask provider error: {0}")]
    Provider(String),

    #[error("non-finite {term} loss at step {step}")]
    NonFinite { term: String, step: usize },
}

impl Error {
    /// Process exit code: 1 config, 2 I/O, 3 parse, 4 backend, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) => 1,
            Error::Io { .. } => 2,
            Error::NoJsonObject | Error::MissingField { .. } | Error::NoMatch(_) => 3,
            Error::Endpoint { .. } | Error::Backend(_) | Error::Provider(_) => 4,
            Error::NonFinite { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
