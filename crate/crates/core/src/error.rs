use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown factor index {0}")]
    UnknownFactor(usize),

    #[error("variable index {index} out of range for n = {n}")]
    UnknownVariable { index: usize, n: usize },

    #[error("energy is not normalizable on an unbounded domain")]
    NotNormalizable,

    #[error("grid density has no mass (domain/energy mismatch)")]
    ZeroMass,

    #[error("truncation left no samples (bound {0} too small)")]
    EmptyTruncation(f64),

    #[error("quadratic form is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("projection did not reach feasibility within {0} iterations")]
    ProjectionDiverged(usize),

    #[error("insufficient samples: need at least {need}, have {have}")]
    InsufficientSamples { need: usize, have: usize },

    #[error("empty span for clique {0:?}")]
    EmptySpan(Vec<usize>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("arithmetic overflow computing {0}")]
    Overflow(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
