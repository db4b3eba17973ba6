//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible operand shapes, e.g. in a matrix product.
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    /// A text input could not be parsed. `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A corpus record was rejected. `index` is 0-based.
    #[error("record {index}: {msg}")]
    Record { index: usize, msg: String },

    /// Invalid configuration value or key.
    #[error("invalid config: {0}")]
    Config(String),

    /// A caller violated an API precondition that is data-dependent.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical operation produced a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

impl Error {
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
