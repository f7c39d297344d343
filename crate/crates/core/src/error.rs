use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// A data row that could not be ingested. `row` is 1-based and counts the header.
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible task: {0}")]
    IncompatibleTask(String),

    #[error("rule spec line {line}: {message}")]
    RuleSpec { line: usize, message: String },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("no model passed the cutoff {cutoff}")]
    NoModelsAboveCutoff { cutoff: f64 },

    /// A pipeline stage aborted the run.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
