use thiserror::Error;

/// Errors surfaced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column count mismatch: {left} vs {right}")]
    ColumnMismatch { left: usize, right: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid tensor mode {0}, expected 1, 2, or 3")]
    InvalidMode(usize),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("SVD did not converge")]
    SvdFailure,

    #[error("pilot length {t} is not a power of two")]
    NotPowerOfTwo { t: usize },

    #[error("pilot rows {q} exceed pilot length {t}")]
    QExceedsT { q: usize, t: usize },

    #[error("phase-schedule rows {n} exceed schedule length {t}")]
    NExceedsT { n: usize, t: usize },

    #[error("array of {n} elements admits no panel factorization")]
    NonFactorableArray { n: usize },

    #[error("identifiability violated: {0}")]
    Identifiability(String),

    #[error("reference has zero Frobenius norm")]
    ZeroReference,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
