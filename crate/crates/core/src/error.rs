use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid hypothesis space: {0}")]
    InvalidHypotheses(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel mismatch: expected {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("weights do not match the layer graph: {0}")]
    WeightGraphMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("score stream delivered {actual} slices, expected {expected}")]
    StreamLengthMismatch { expected: usize, actual: usize },

    #[error("no valid ground-truth pixel, loss is undefined")]
    EmptyValidSet,

    #[error("reference point cloud is empty")]
    EmptyReference,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("surface is not visible from view {0}")]
    NoIntersection(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("big-endian PFM files are not supported")]
    BigEndianUnsupported,

    #[error("rotation is not rigid and cannot be repaired: {0}")]
    NonRigidRotation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
