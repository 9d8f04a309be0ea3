//! Error type shared by the whole library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfvError {
    /// The system description violates one or more validation rules.
    #[error("invalid system: {0}")]
    Invalid(String),

    /// Malformed configuration input (JSON shape, unknown keys, bad values).
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested basis exceeds the hard dimension cap.
    #[error("basis dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// Dense diagonalization was requested above the dense cap.
    #[error("dimension {dim} exceeds the dense cap {cap}; use the iterative path")]
    DenseCap { dim: usize, cap: usize },

    /// The iterative eigensolver ran out of its matrix-vector budget.
    #[error("eigensolver did not converge: best residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    /// The self-consistent mean-field loop failed.
    #[error("SCF failure: {0}")]
    Scf(String),

    /// A vector length does not match the operator or grid dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// State persistence problems (bad magic, hash mismatch, truncation).
    #[error("state file error: {0}")]
    StateFile(String),

    /// A LAPACK routine reported a nonzero info code.
    #[error("LAPACK {routine} failed with info {info}")]
    Lapack { routine: &'static str, info: i32 },

    /// Density inversion / auxiliary-system errors.
    #[error("auxiliary-system error: {0}")]
    Qedft(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PfvError>;
