//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text; `line` is 1-based within the offending file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally invalid data, named by the sentence/instance it came from.
    #[error("validation error for {id}: {msg}")]
    Validation { id: String, msg: String },

    /// A referenced id does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Bad configuration (ranges, shapes declared in config, unknown enum values).
    #[error("config error: {0}")]
    Config(String),

    /// Tensor shape disagreement between parameters and inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Non-finite loss, zero vectors where a direction is required, and similar.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Inconsistent or missing data discovered after parsing.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            id: id.into(),
            msg: msg.into(),
        }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
