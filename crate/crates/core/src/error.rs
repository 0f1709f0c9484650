use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad parameter, mismatched shapes).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input is well-formed but outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed binary or text input.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("resource error: {0}")]
    Resource(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
