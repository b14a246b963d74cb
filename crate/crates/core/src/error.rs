//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for a tape primitive.
    #[error("shape mismatch in `{op}`: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// A tensor that must be finite contains NaN or Inf.
    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    /// A scalar was required (e.g. the loss fed to backward).
    #[error("`{op}` requires a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: Vec<usize> },

    /// Classification label outside [0, C).
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// Generic invalid-argument error with context.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Checkpoint file does not start with the expected magic bytes.
    #[error("checkpoint: bad magic bytes")]
    CheckpointBadMagic,

    /// Checkpoint format version is not supported.
    #[error("checkpoint: unsupported format version {0}")]
    CheckpointBadVersion(u32),

    /// Checkpoint JSON header failed to parse.
    #[error("checkpoint: header parse error: {0}")]
    CheckpointHeader(String),

    /// Checkpoint payload length disagrees with the descriptor.
    #[error("checkpoint: payload mismatch, descriptor declares {expected} floats, payload holds {got}")]
    CheckpointPayloadMismatch { expected: usize, got: usize },

    /// Checkpoint file ends before the declared payload.
    #[error("checkpoint: truncated file")]
    CheckpointTruncated,

    /// Tensor file does not start with "TNSR".
    #[error("tensor file: bad magic bytes")]
    TensorFileBadMagic,

    /// Tensor file version is not supported.
    #[error("tensor file: unsupported version {0}")]
    TensorFileBadVersion(u16),

    /// Tensor file dtype code is unknown.
    #[error("tensor file: unknown dtype code {0}")]
    TensorFileBadDtype(u8),

    /// Tensor file payload is shorter than the dims declare.
    #[error("tensor file: truncated payload")]
    TensorFileTruncated,

    /// Tensor file dims overflow addressable size.
    #[error("tensor file: dimension product overflows")]
    TensorFileDimOverflow,

    /// Tensor file holds more bytes than the dims declare.
    #[error("tensor file: {0} trailing bytes after payload")]
    TensorFileTrailing(usize),

    /// Covariance estimation needs at least two samples.
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// Two statistics objects have different dimensions.
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },

    /// Matrix handed to the PSD square root is not symmetric.
    #[error("matrix square root: input asymmetric, max |A - A^T| = {0:.3e}")]
    AsymmetricInput(f64),

    /// Matrix handed to the PSD square root has a significantly negative spectrum.
    #[error("matrix square root: negative eigenvalue {value:.3e} below tolerance {tol:.3e}")]
    NegativeEigenvalue { value: f64, tol: f64 },

    /// Probability vector is not a simplex point.
    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    /// A metric split would be empty.
    #[error("empty split: {got} samples over {splits} splits")]
    EmptySplit { got: usize, splits: usize },

    /// 1-D Wasserstein needs equal sample counts.
    #[error("sample count mismatch: {a} vs {b}")]
    CountMismatch { a: usize, b: usize },

    /// Attack specification violates an invariant.
    #[error("invalid attack spec: {0}")]
    InvalidAttackSpec(String),

    /// Training configuration violates an invariant.
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    /// Training loss became NaN.
    #[error("training diverged (NaN loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
