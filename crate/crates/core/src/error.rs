use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} cells, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: unknown class label {label:?} and the schema has no default class")]
    UnknownLabel { row: usize, label: String },

    #[error("header mismatch at column {column}: expected {expected:?}, found {found:?}")]
    Header {
        column: usize,
        expected: String,
        found: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("split failed: {0}")]
    Split(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed container {path}: {reason}")]
    Container { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configuration, schema,
    /// arguments) as opposed to failures while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Schema(_)
                | Error::Header { .. }
                | Error::Arity { .. }
                | Error::UnknownLabel { .. }
                | Error::InvalidArgument(_)
        )
    }
}
