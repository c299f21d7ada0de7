use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum MoccaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Calibration needs every sample of the centered `size`×`size` block.
    #[error("k-space sample {index:?} is not acquired, but the calibration block \u{039b}_{{M+L-1}} ({size}x{size}) must be fully sampled")]
    MissingAcs { index: (i64, i64), size: usize },

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("linear combination of singular vectors vanished; no coefficient vector can be formed")]
    ZeroCombination,

    #[error("singular group system at pixel {index:?} (smallest pivot {pivot:e})")]
    SingularGroup { index: (i64, i64), pivot: f64 },

    #[error("image is identically zero and cannot be normalized")]
    ZeroImage,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("gave up after {attempts} attempts: {what}")]
    RetriesExhausted { what: String, attempts: usize },

    #[error("unsupported sampling pattern: {0}")]
    UnsupportedPattern(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MoccaError>;
