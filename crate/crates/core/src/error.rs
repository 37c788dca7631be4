use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("csv ingestion failed at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("checkpoint format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checkpoint corrupted in {path}: {message}")]
    Corruption { path: PathBuf, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("phase coverage incomplete, missing: {missing:?}")]
    Coverage { missing: Vec<String> },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("sample size too small: {0}")]
    SampleSize(String),

    #[error("incomplete zoo, {} cell(s) not finished: {}", .cells.len(), .cells.join(", "))]
    IncompleteZoo { cells: Vec<String> },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
