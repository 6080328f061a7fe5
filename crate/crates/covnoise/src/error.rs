//! Crate-wide error type.

use crate::optimizer::TrajectoryLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("eigenvalue {value:.3e} below the PSD tolerance {tolerance:.3e}")]
    NegativeEigenvalue { value: f64, tolerance: f64 },
    #[error("negative entry {value:.3e} where a nonnegative value is required")]
    NegativeEntry { value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid batch sizes: m_large={m_large}, m_small={m_small}")]
    InvalidBatchSizes { m_large: usize, m_small: usize },
    #[error("gamma={gamma} violates the step schedule invariant (needs gamma >= {required})")]
    InvalidGamma { gamma: f64, required: f64 },
    #[error("invalid step size {0}")]
    InvalidStepSize(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("per-example gradients carry no activation pairs")]
    MissingActivations,
    #[error("full Fisher materialization gated to d <= {limit}, got d = {dim}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("batch size {batch_size} invalid for dataset of {available} samples")]
    BadBatchSize { batch_size: usize, available: usize },
    #[error("loss became non-finite or exceeded the divergence guard at step {step}")]
    NonFiniteLoss { step: u64, log: Box<TrajectoryLog> },
    #[error("covariance is singular after regularization")]
    SingularCovariance,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("bad magic number {found:#010x}")]
    BadMagic { found: u32 },
    #[error("file truncated: {0}")]
    TruncatedFile(String),
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("config parse error: {0}")]
    ParseError(String),
    #[error("config validation failed for field `{field}`: {reason}")]
    ValidationError { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
