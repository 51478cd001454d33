use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid merge sample: {0}")]
    InvalidSample(String),

    #[error("failed to fit expert {expert}: {reason}")]
    Fit { expert: String, reason: String },

    #[error("router training diverged at iteration {iteration}: loss = {loss}")]
    Training { iteration: usize, loss: f64 },

    #[error("schema error: column `{0}` not found")]
    Schema(String),

    #[error("no usable rows in {0}")]
    EmptyData(PathBuf),

    #[error("cannot split {available} rows: need at least {required}")]
    Split { available: usize, required: usize },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
