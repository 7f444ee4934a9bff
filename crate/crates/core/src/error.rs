use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record could not be decoded at all (bad JSON, wrong field types,
    /// unknown or missing fields).
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: unknown {field} value {value:?}")]
    UnknownEnum {
        line: usize,
        field: &'static str,
        value: String,
    },

    #[error("line {line}: invalid box: {message}")]
    InvalidBox { line: usize, message: String },

    #[error("line {line}: duplicate frame_id {frame_id:?}")]
    DuplicateFrame { line: usize, frame_id: String },

    /// Any other record-level invariant (status/color consistency, image size,
    /// confidence range).
    #[error("line {line}: {rule}: {message}")]
    Invariant {
        line: usize,
        rule: &'static str,
        message: String,
    },

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("metrics csv: {0}")]
    Csv(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
