//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Error`]. The CLI maps
//! error classes onto distinct process exit codes, so each variant carries a
//! [`ErrorClass`].

use crate::geom::Axis;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes; the CLI turns these into exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed command line (exit code 2).
    Usage,
    /// Inputs violate a documented precondition (exit code 3).
    Validation,
    /// Filesystem-level failure (exit code 4).
    Io,
    /// Non-finite values or diverging optimization (exit code 5).
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Io => 4,
            ErrorClass::Numerical => 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point out of bounds on axis {axis}: index {index} not in 0..{dim}")]
    OutOfBounds { axis: Axis, index: i64, dim: usize },

    #[error("channel count mismatch: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("spacing mismatch: {left:?} mm vs {right:?} mm")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },

    #[error("search region is empty after clipping to volume bounds")]
    EmptyRegion,

    #[error("inconsistent downsample factor: template pair {template:?}, query pair {query:?}")]
    InconsistentDownsample {
        template: [usize; 3],
        query: [usize; 3],
    },

    #[error("label {label} at linear index {index} exceeds class count {num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: u16,
        num_classes: u16,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("payload length mismatch: header implies {expected} elements, file holds {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("truncated file while reading {context}")]
    Truncated { context: &'static str },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss became non-finite")]
    TrainingDiverged {
        step: usize,
        history: Vec<crate::trainer::LossRecord>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::Io(_) => ErrorClass::Io,
            Error::NonFinite(_) | Error::TrainingDiverged { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
