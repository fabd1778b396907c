//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the pretraining crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Array or image dimensions do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A scalar argument is outside its admissible range.
    #[error("range error: {0}")]
    Range(String),
    /// A configuration violates its invariants.
    #[error("config error: {0}")]
    Config(String),
    /// A dataset is unusable (empty, single-class, unreadable).
    #[error("data error: {0}")]
    Data(String),
    /// A masked reduction was requested over an empty mask.
    #[error("empty-support error: {0}")]
    EmptySupport(String),
    /// A checkpoint file is truncated, malformed, or version-mismatched.
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
