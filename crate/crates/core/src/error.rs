use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("weight solver did not reach R >= {target:.6} (best {best:.6}) after T = {t}")]
    Convergence { target: f64, best: f64, t: u32 },

    #[error("instance has no matchable mass (OPT = 0)")]
    DegenerateInstance,

    #[error("arrival stream does not match instance: {0}")]
    StreamMismatch(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("record line {line}: {msg}")]
    Record { line: usize, msg: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
