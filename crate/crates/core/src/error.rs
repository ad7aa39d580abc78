use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing {field}")]
    MissingField { line: usize, field: String },

    #[error("unresolved placeholder `{0}`")]
    UnresolvedPlaceholder(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("zero-shot tasks are never rehearsed (task `{0}`)")]
    ZeroShotRehearsal(String),

    #[error("unknown {kind} `{name}`; known: {known}")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("duplicate keyword `{0}` in composed constraints")]
    DuplicateKeyword(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("corrupt snapshot at byte offset {offset}: {message}")]
    CorruptSnapshot { offset: usize, message: String },

    #[error("task `{task}`: {message}")]
    Task { task: String, message: String },

    #[error("length mismatch: {0} predictions vs {1} golds")]
    LengthMismatch(usize, usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn task(task: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Task {
            task: task.into(),
            message: message.into(),
        }
    }
}
