use thiserror::Error;

/// Errors raised by the bound evaluators and simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("information density diverges at input {x}, output {y}: W(y|x) > 0 but PW(y) = 0")]
    DivergentDensity { x: usize, y: usize },
    #[error("direction entries sum to {0}, expected 0")]
    ZeroSumViolation(f64),
    #[error("no probe direction with |dI1(v)| above tolerance; eta is undefined")]
    DegenerateDerivatives,
    #[error("maximin solver did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("weighted increment law depends on the input symbol; use the Chebyshev converse")]
    NotInvariant,
    #[error("lattice support of {size} points exceeds the limit of {limit}")]
    SupportOverflow { size: usize, limit: usize },
    #[error("folded probability mass {mass:e} exceeds 1e-12; widen the truncation band")]
    TruncationMassExceeded { mass: f64 },
    #[error("no message count M >= 1 meets epsilon = {0}")]
    NoFeasibleM(f64),
    #[error("channel is not a parallel-BSC pair")]
    WrongChannelFamily,
    #[error("blocklength too small: {0}")]
    BlocklengthTooSmall(String),
    #[error("no feasible threshold: {0}")]
    NoFeasibleGamma(String),
    #[error("target error {target} is below the error floor {floor}")]
    InfeasibleEpsilon { target: f64, floor: f64 },
    #[error("stabilization spec violates the drift condition: {0}")]
    SpecViolation(String),
    #[error("pointwise curve ordering violated: {0}")]
    OrderingViolation(String),
    #[error("certification refused: {0}")]
    CertificationRefused(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Coarse category used by the command-line front end to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io(_) => ErrorCategory::Io,
            Error::NonConvergence { .. }
            | Error::SupportOverflow { .. }
            | Error::TruncationMassExceeded { .. }
            | Error::DegenerateDerivatives
            | Error::NoFeasibleM(_)
            | Error::NoFeasibleGamma(_)
            | Error::InfeasibleEpsilon { .. }
            | Error::OrderingViolation(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
