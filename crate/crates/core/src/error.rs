use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: start year {start} is after end year {end}")]
    InvertedInterval { line: usize, start: i32, end: i32 },

    #[error("no bounded years to bin")]
    EmptyTimeDomain,

    #[error("dataset not found: {}", .0.display())]
    DatasetNotFound(PathBuf),

    #[error("unknown {kind} `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("{kind} id {id} out of range (size {size})")]
    IdOutOfRange { kind: &'static str, id: usize, size: usize },

    #[error("bin index {bin} out of range (T = {bins})")]
    BinOutOfRange { bin: usize, bins: usize },

    #[error("relation negatives unavailable: graph has a single relation")]
    SamplerUnavailable,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParam(String),

    #[error("objective became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("checkpoint version mismatch: found `{0}`")]
    CheckpointVersion(String),

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint dimension mismatch: {0}")]
    CheckpointDimension(String),

    #[error("checkpoint malformed at line {line}: {message}")]
    CheckpointMalformed { line: usize, message: String },

    #[error("model/graph mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
