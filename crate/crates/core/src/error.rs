use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition (wrong dimension, too few samples).
    #[error("usage error: {0}")]
    Usage(String),
    /// A configuration value is out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),
    /// A diagnostic could not be computed from the given inputs.
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    /// A Langevin update produced a non-finite state.
    #[error("non-finite state produced by Langevin step")]
    NonFinite,
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn diagnostic(msg: impl Into<String>) -> Self {
        Error::Diagnostic(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
