use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("latitude {0} is outside the UTM band (|lat| > 84)")]
    OutsideUtmBand(f64),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid pair: time gap {0} s must be positive")]
    InvalidPair(f64),

    #[error("input not sorted by time at position {0}")]
    Unsorted(usize),

    #[error("track {0} is not active in the endpoint store")]
    UnknownTrack(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("posit sets differ: {0}")]
    PositMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model file {path}: {msg}")]
    ModelFormat { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
