use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unknown wavelet code {0:?} (expected '2' or '4')")]
    UnknownWaveletCode(char),

    #[error("invalid patch size {patch} for length {length}")]
    InvalidPatch { patch: usize, length: usize },

    #[error("non-finite input: {0}")]
    NumericInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("reconstruction impossible: local basis is singular")]
    ReconstructionImpossible,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
