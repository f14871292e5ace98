use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the labeling, feature, learning and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate content_id `{0}`")]
    DuplicateId(String),

    #[error("content_id `{0}` missing from feature table")]
    MissingId(String),

    #[error("content_id `{0}` in feature table is not part of the dataset")]
    UnexpectedId(String),

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("too few samples: need at least {required}, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("expected {expected} class boundaries, found {found} posterior-argmax switches")]
    ThresholdCount { expected: usize, found: usize },

    #[error("class {0} has no members")]
    MissingClass(usize),

    #[error("class {class} has {count} members, at least {required} needed for stratification")]
    SmallClass {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("repeat {repeat}, task {task}: {source}")]
    Repeat {
        repeat: usize,
        task: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by bad inputs (as opposed to failures of a computation
    /// on valid inputs). Drives the CLI exit code.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::DuplicateId(_)
            | Error::MissingId(_)
            | Error::UnexpectedId(_)
            | Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::Image { .. } => true,
            Error::Repeat { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
