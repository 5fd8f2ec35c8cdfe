use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown label `{name}`{context}")]
    UnknownLabel { name: String, context: String },

    #[error("dialogue `{id}`: {message}")]
    InvalidDialogue { id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("untrained policy: no transitions to predict from")]
    UntrainedPolicy,

    #[error("unknown tree root `{0}`")]
    UnknownRoot(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("non-finite loss at epoch {epoch}, example {example}: {loss}")]
    NonFiniteLoss { epoch: usize, example: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("missing model for method `{0}`")]
    MissingModel(String),

    #[error("untrained model: train it before generating")]
    UntrainedModel,

    #[error("missing condition label: the generator was trained with conditioning")]
    MissingCondition,
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, arguments, data) as
    /// opposed to internal failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, CoreError::NonFiniteLoss { .. })
    }
}
