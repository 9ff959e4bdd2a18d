//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor/parameter shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    /// A configuration value is out of its legal range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    /// Input data violates a contract (bad label, overlapping spans, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A text file does not parse; `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// Stored content does not match its recorded hash, or a container is
    /// corrupt.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// An operation was called in the wrong order (e.g. backward before
    /// forward).
    #[error("state error: {0}")]
    State(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn parameter(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user-supplied input (files, config,
    /// labels) rather than an internal invariant. CLI maps these to exit
    /// code 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parameter { .. }
                | Error::Data(_)
                | Error::Format { .. }
                | Error::Integrity(_)
                | Error::Io { .. }
        )
    }
}
