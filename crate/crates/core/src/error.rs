//! Error types shared across the toolkit.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor shapes do not agree with what an operation expects.
    #[error("shape error in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    /// A NaN or infinite value was produced or consumed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// API misuse (non-scalar loss, empty batch, mismatched ids, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or unsupported file content. `field` names the offending part.
    #[error("format error in {path}: {field}: {detail}")]
    Format {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, field: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            field,
            detail: detail.to_string(),
        }
    }
}
