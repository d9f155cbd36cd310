use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to load image {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("failed to write {path}: {reason}")]
    Write { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("identical inputs: PSNR is infinite")]
    InfinitePsnr,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at layer {layer}: {detail}")]
    Divergence { layer: usize, detail: String },

    #[error("JND map is identically zero; epsilon cannot be calibrated")]
    Uncalibratable,

    #[error("target PSNR {target:.3} dB unreachable: floor reached is {floor:.3} dB at epsilon {epsilon}")]
    Unreachable { target: f64, floor: f64, epsilon: f64 },

    #[error("model {model}: {source}")]
    Model { model: String, source: Box<Error> },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("frozen model was modified: {0}")]
    FrozenModified(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
