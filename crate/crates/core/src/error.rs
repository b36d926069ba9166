use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid scale spec: {0}")]
    InvalidSpec(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),

    #[error("empty scoring set: {0}")]
    EmptyScoringSet(String),

    #[error("calibration requires at least {min} scores, got {actual}")]
    TooFewScores { min: usize, actual: usize },

    #[error("split leakage: record {0} appears in more than one split")]
    SplitLeakage(String),

    #[error("codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
