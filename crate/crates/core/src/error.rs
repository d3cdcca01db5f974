use thiserror::Error;
use udfe_nn::NnError;

use crate::data::DataError;
use crate::training::checkpoint::CheckpointError;

/// Top-level error for model construction, training, metrics and the
/// downstream pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{field}`: {detail}")]
    Config { field: String, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(field: &str, detail: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        detail: detail.into(),
    }
}

pub(crate) fn invalid(detail: impl Into<String>) -> Error {
    Error::Invalid(detail.into())
}
