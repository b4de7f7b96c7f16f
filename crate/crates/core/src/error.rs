use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration has {} violation(s): {}", .0.len(), .0.join("; "))]
    ConfigViolations(Vec<String>),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("invalid shift-family spec: {0}")]
    Spec(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("covariance error: {0}")]
    Covariance(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Ingestion {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    IngestionFile { path: PathBuf, message: String },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
