use thiserror::Error;

use crate::geometry::Space;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate spaces differ: {left} vs {right}")]
    SpaceMismatch { left: Space, right: Space },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("no projection defined from {from} to {to}")]
    UnknownProjection { from: Space, to: Space },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("chips {first} and {second} overlap")]
    OverlappingChips { first: u32, second: u32 },

    #[error("chip {id} extends outside the {width}x{height} image")]
    ChipOutOfBounds { id: u32, width: u32, height: u32 },

    #[error("detector contract violated: {0}")]
    DetectorContract(String),

    #[error("infeasible scene spec: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"FPM1\"")]
    BadMagic { path: String, found: String },

    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: header declares {expected} payload bytes but {actual} follow")]
    PayloadMismatch {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: annotation {id}: {message}")]
    Annotation {
        path: String,
        id: u64,
        message: String,
    },
}
