use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("volume mismatch: shape {from:?} cannot be viewed as {to:?}")]
    VolumeMismatch { from: Vec<usize>, to: Vec<usize> },

    #[error("operation needs at least {needed} modes, tensor has {actual}")]
    RankTooLow { needed: usize, actual: usize },

    #[error("invalid shape {0:?}: every extent must be at least 1 and d >= 1")]
    InvalidShape(Vec<usize>),

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("SVD of a {rows}x{cols} matrix did not converge within {max_iterations} sweeps")]
    ConvergenceFailure {
        rows: usize,
        cols: usize,
        max_iterations: usize,
    },

    #[error("volume {0} has fewer than two prime factors and cannot be tensorized")]
    UnfactorableVolume(usize),

    #[error("invalid tolerance {0}: must be finite and nonnegative")]
    InvalidTolerance(f64),

    #[error("invalid TT cores: {0}")]
    InvalidCores(String),

    #[error("layer parameter sum {layers} exceeds model total {total}")]
    InconsistentTotals { layers: usize, total: usize },

    #[error("unknown layer {0:?}")]
    UnknownLayer(String),

    #[error("duplicate layer name {0:?}")]
    DuplicateLayer(String),

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("accuracy oracle failed: {0}")]
    OracleFailure(String),

    #[error("accuracy gate violated: final {final_accuracy} < original {original_accuracy} - {tolerance}")]
    GateViolation {
        original_accuracy: f64,
        final_accuracy: f64,
        tolerance: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt length: {0}")]
    CorruptLength(String),

    #[error("malformed file: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
