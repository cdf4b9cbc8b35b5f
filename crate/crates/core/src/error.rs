use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("class `{class}` has zero frequency")]
    ZeroFrequency { class: String },

    #[error("class `{class}` has zero instances")]
    ZeroCount { class: String },

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("batch has no foreground proposals")]
    EmptyForeground,

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("unsupported format version {found} in {what} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_config(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
