use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("trajectory {trajectory_id}: invalid field `{field}`: {message}")]
    Validation {
        trajectory_id: String,
        field: String,
        message: String,
    },

    #[error("tensor file: {0}")]
    Format(String),

    #[error("tensor file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite activation at boundary {boundary}, layer {layer}, dim {dim}")]
    NonFinite {
        boundary: usize,
        layer: u32,
        dim: usize,
    },

    #[error("invalid edge ({0}, {1}) for graph with {2} nodes")]
    InvalidEdge(usize, usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("training data has a single class")]
    SingleClass,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(id: &str, field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            trajectory_id: id.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }
}
