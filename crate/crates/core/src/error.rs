use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    MalformedRow {
        file: String,
        line: u64,
        message: String,
    },

    #[error("cohort failed validation ({} violations); first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    Validation(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("outcome has a single class; at least one purchase and one refusal are required")]
    SingleClass,

    #[error("non-finite value in column {0}")]
    NonFinite(String),

    #[error("not enough rows: need {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },

    #[error("length mismatch: {0} predictions vs {1} outcomes")]
    LengthMismatch(usize, usize),

    #[error("model does not match feature matrix: {0}")]
    ModelSpaceMismatch(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("conflicting duplicate key in report inputs: {0}")]
    DuplicateKey(String),

    #[error("degenerate regressor: {0}")]
    Degenerate(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
