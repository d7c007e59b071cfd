//! Crate-wide error type.
//!
//! Shape and precondition failures carry enough context (operation name,
//! offending dimensions or values) to be actionable without a debugger.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two matrices had incompatible shapes for the requested operation.
    #[error("{op}: dimension mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// An operation that requires a square matrix received a rectangular one.
    #[error("{op}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    /// Symmetric eigendecomposition was asked to process a matrix whose
    /// asymmetry exceeds the tolerated defect.
    #[error("sym_eigendecompose: matrix is not symmetric (defect {defect:e} exceeds allowed {allowed:e})")]
    NotSymmetric { defect: f64, allowed: f64 },

    /// The Jacobi iteration did not reach the requested off-diagonal
    /// threshold within the sweep budget.
    #[error("sym_eigendecompose: no convergence after {sweeps} sweeps (off-diagonal residual {residual:e}, threshold {threshold:e})")]
    NoConvergence {
        sweeps: usize,
        residual: f64,
        threshold: f64,
    },

    /// A kernel whose spectrum should be positive semi-definite produced an
    /// eigenvalue below the tolerated negative band.
    #[error("kernel is not positive semi-definite: min eigenvalue {min_eigenvalue:e} below bound {bound:e}")]
    KernelNotPsd { min_eigenvalue: f64, bound: f64 },

    /// A spectrum with no strictly positive eigenvalue has no meaningful
    /// effective rank.
    #[error("degenerate kernel: spectrum has no strictly positive eigenvalue")]
    DegenerateKernel,

    /// A network description violated a structural requirement.
    #[error("invalid network spec: {reason}")]
    InvalidSpec { reason: String },

    /// A batch-consuming operation received zero samples.
    #[error("{op}: empty batch")]
    EmptyBatch { op: &'static str },

    /// A computation produced NaN or infinity where finite values are required.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// Generic precondition violation; `op` names the operation.
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    /// A binary dataset file did not start with the expected magic number.
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    /// A binary dataset file ended before the declared payload.
    #[error("{path}: file truncated ({detail})")]
    Truncated { path: PathBuf, detail: String },

    /// Image and label files declare different sample counts.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// A CIFAR batch file is not a whole number of 3073-byte records.
    #[error("{path}: length {len} is not a multiple of the {record} byte record size")]
    RecordMisaligned {
        path: PathBuf,
        len: u64,
        record: usize,
    },

    /// A label byte outside the valid class range.
    #[error("label {value} out of range (expected 0..{classes})")]
    LabelOutOfRange { value: u8, classes: usize },

    /// A class name that does not exist in the dataset.
    #[error("unknown class {name:?}; available: {available:?}")]
    UnknownClass {
        name: String,
        available: Vec<String>,
    },

    /// A referenced dataset file is absent.
    #[error("dataset not found: {path}")]
    DatasetNotFound { path: PathBuf },

    /// Configuration file parsing or validation failure.
    #[error("config error: {message}")]
    Config { message: String },

    /// Persisted records could not be interpreted.
    #[error("records error: {message}")]
    Records { message: String },

    /// Underlying I/O failure with the path that triggered it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
