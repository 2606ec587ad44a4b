use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock space: cutoff {0} (need at least 2)")]
    InvalidSpace(usize),
    #[error("truncation overflow: tail population {tail:.3e} in the top Fock levels at cutoff {cutoff}; use a cutoff of at least {required}")]
    TruncationOverflow { cutoff: usize, required: usize, tail: f64 },
    #[error("operator is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("not a double well: found minima at {minima:?} and maxima at {maxima:?}")]
    NotADoubleWell { minima: Vec<f64>, maxima: Vec<f64> },
    #[error("spectrum not converged: lowest levels moved by {shift:.3e} between cutoff {cutoff} and {larger}; increase the cutoff")]
    SpectrumNotConverged { cutoff: usize, larger: usize, shift: f64 },
    #[error("post-selection extinction: acceptance weight {0:.3e}")]
    Extinction(f64),
    #[error("integrator tolerance exceeded: trace drift {trace_drift:.3e}, min eigenvalue {min_eigenvalue:.3e}")]
    Tolerance { trace_drift: f64, min_eigenvalue: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
