use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input contains a negative entry ({value}) at flat index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("rank {rank} exceeds the admissible bound {bound}")]
    RankTooLarge { rank: usize, bound: usize },

    #[error("clip has {len} samples, shorter than one frame of {frame_len}")]
    ClipTooShort { len: usize, frame_len: usize },

    #[error("recordings disagree on frame count: {0}")]
    HeterogeneousFrames(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("wav decode error in {path}: {reason}")]
    WavDecode { path: PathBuf, reason: String },

    #[error("tensor file error: {0}")]
    TensorFormat(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
