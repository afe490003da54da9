use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmError {
    /// Caller violated a documented precondition (wrong family, bad radius order, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The requested object does not exist for this group family.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Family parameters failed validation.
    #[error("invalid group parameters: {0}")]
    InvalidParameters(String),

    /// A ball would exceed the configured element cap.
    #[error("ball B({radius}) would hold at least {projected} elements, above the cap of {cap}")]
    BallCap { radius: f64, projected: u128, cap: usize },

    /// A dense matrix would exceed the configured row cap.
    #[error("matrix with {rows} rows exceeds the row cap of {cap}")]
    MatrixCap { rows: usize, cap: usize },

    /// A doubling constant failed validation on the materialized range.
    #[error("doubling constant {constant} violated at r = {witness_r}: |B(2r)|/|B(r)| = {ratio}")]
    Doubling { constant: f64, witness_r: f64, ratio: f64 },
}

pub type Result<T> = std::result::Result<T, QmError>;
