//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to map errors onto CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: configs, domains, parameter assumptions.
    Validation,
    /// Failure while computing: blow-up, lost brackets, stalled iterations.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} lies outside [0, {max}]")]
    Domain {
        what: &'static str,
        value: f64,
        max: f64,
    },
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("invalid birth kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("step error: {0}")]
    Step(String),
    #[error("numerical blow-up: non-finite density at t = {t}")]
    BlowUp { t: f64 },
    #[error("no real root: {0}")]
    NoRoot(String),
    #[error("method mismatch: {0}")]
    MethodMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("extinct signal: total mass nonpositive at t = {t} (rate sentinel -inf)")]
    ExtinctSignal { t: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain { .. }
            | Error::InvalidCoefficient(_)
            | Error::InvalidKernel(_)
            | Error::InvalidParams(_)
            | Error::InvalidGrid(_)
            | Error::InvalidState(_)
            | Error::Config(_)
            | Error::MethodMismatch(_)
            | Error::InsufficientData(_) => ErrorKind::Validation,
            _ => ErrorKind::Numerical,
        }
    }

    /// CLI contract: 1 for validation errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Numerical => 2,
        }
    }
}
