use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    /// Invalid operator geometry or hyperparameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("corruption error: {0}")]
    Corruption(String),

    /// Training produced a non-finite loss; carries the offending batch.
    #[error("non-finite loss at step {step} (batch ids: {})", batch_ids.join(", "))]
    NonFinite { step: u64, batch_ids: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("byte {offset}"),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
