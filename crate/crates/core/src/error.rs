use std::path::PathBuf;

use thiserror::Error;
use unist_tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("clip {clip}: {path}: {msg}")]
    Clip {
        clip: String,
        path: PathBuf,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("degenerate input to {op}: {msg}")]
    Degenerate { op: &'static str, msg: String },
    #[error("undefined metric {metric}: {msg}")]
    UndefinedMetric { metric: &'static str, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Dimension(_) => 2,
            Error::Tensor(TensorError::Config { .. } | TensorError::Shape { .. }) => 2,
            Error::Clip { .. } | Error::Data { .. } => 3,
            Error::Tensor(TensorError::Format(_) | TensorError::Incompatible(_)) => 3,
            Error::Degenerate { .. } | Error::UndefinedMetric { .. } | Error::Numeric(_) => 4,
            Error::Tensor(_) | Error::Io(_) => 1,
        }
    }
}
