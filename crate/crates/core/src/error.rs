use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid group element: {0}")]
    InvalidElement(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("chain mismatch: {0}")]
    ChainMismatch(String),

    #[error("inconclusive at depth {depth}: {reason}")]
    Inconclusive { depth: usize, reason: String },

    #[error("arithmetic overflow extending chain past depth {0}")]
    Overflow(usize),

    #[error("distality violated at i = {index}, k = {separation}")]
    DistalityViolation { index: i64, separation: i64 },

    #[error("eigensolver failed to converge at index {0}")]
    NoConvergence(usize),

    #[error("dressing did not converge after {iterations} iterations (interior mismatch {mismatch:e})")]
    DressingNotConverged { iterations: usize, mismatch: f64 },

    #[error("localization centers collide: {0} sites without a matched eigenvector")]
    CenterCollision(usize),

    #[error("too few points above floor for a decay fit ({0})")]
    InsufficientPoints(usize),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code: 2 invalid input, 3 inconclusive or non-converged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidChain(_)
            | Error::InvalidElement(_)
            | Error::InvalidInput(_)
            | Error::ChainMismatch(_)
            | Error::Parse(_) => 2,
            Error::Inconclusive { .. }
            | Error::DressingNotConverged { .. }
            | Error::CenterCollision(_)
            | Error::NoConvergence(_) => 3,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidChain(_) => "invalid_chain",
            Error::InvalidElement(_) => "invalid_element",
            Error::InvalidInput(_) => "invalid_input",
            Error::ChainMismatch(_) => "chain_mismatch",
            Error::Inconclusive { .. } => "inconclusive",
            Error::Overflow(_) => "overflow",
            Error::DistalityViolation { .. } => "distality_violation",
            Error::NoConvergence(_) => "no_convergence",
            Error::DressingNotConverged { .. } => "not_converged",
            Error::CenterCollision(_) => "center_collision",
            Error::InsufficientPoints(_) => "insufficient_points",
            Error::Parse(_) => "parse",
        }
    }
}
