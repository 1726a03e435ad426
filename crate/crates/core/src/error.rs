use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("config error: {0}")]
    Config(String),

    /// Cumulative sampling found no mass to distribute (static video).
    #[error("empty selection: event densities sum to zero")]
    EmptySelection,

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("service error: {0}")]
    Service(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Coarse failure classes; the CLI maps each to one exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Config,
    Service,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Service(_) | Error::Protocol(_) => ErrorCategory::Service,
            Error::Dimension(_)
            | Error::Input(_)
            | Error::Argument(_)
            | Error::EmptySelection
            | Error::Format { .. }
            | Error::Io { .. } => ErrorCategory::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
