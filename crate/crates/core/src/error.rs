//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure (missing file, truncated read, ...).
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    /// A file does not match its declared binary layout.
    #[error("format error: {0}")]
    Format(String),
    /// A text record could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// An input violates a documented invariant or precondition.
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
