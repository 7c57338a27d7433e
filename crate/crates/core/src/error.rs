use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {msg}")]
    Load { path: PathBuf, line: usize, msg: String },

    #[error("cannot normalize {raw:?}: {msg}")]
    Normalize { raw: String, msg: String },

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("reasoning error: {0}")]
    Reasoning(String),

    #[error("pipeline stage `{stage}` failed: {msg}")]
    Pipeline { stage: String, msg: String },

    #[error("gradient check failed at {param}[{index}]: {msg}")]
    GradCheck { param: String, index: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
