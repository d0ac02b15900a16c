use thiserror::Error;

/// Errors raised by the decomposition library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),
    #[error("empty spectrum: the tensor is zero")]
    EmptySpectrum,
    #[error("infeasible rank {rank}: {reason}")]
    InfeasibleRank { rank: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("zero vector passed as {0}")]
    ZeroVector(&'static str),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CpError>;
