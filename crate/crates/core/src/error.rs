use thiserror::Error;

use crate::riccati::FiniteRiccatiPath;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { what: String, min_eigenvalue: f64 },

    #[error("{what} is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { what: String, asymmetry: f64 },

    #[error("{what} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { what: String, min_eigenvalue: f64 },

    #[error("discount rate must be positive and finite, got {0}")]
    NonPositiveRho(f64),

    #[error("signal evaluated at negative time {0}")]
    NegativeTime(f64),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Riccati path blew up at t = {time}")]
    BlowUp {
        time: f64,
        partial: Box<FiniteRiccatiPath>,
    },

    #[error("step too coarse: halving the step count moves P(0) by {relative_change:e} (relative)")]
    StepTooCoarse { relative_change: f64 },

    #[error("Hamiltonian has an eigenvalue on the imaginary axis (min |Re| = {min_abs_real:e}, threshold {threshold:e})")]
    ImaginaryAxisEigenvalue { min_abs_real: f64, threshold: f64 },

    #[error("stable invariant subspace is not a graph subspace; no stabilizing solution")]
    SubspaceNotGraph,

    #[error("Riccati solution asymmetry {0:e} exceeds tolerance")]
    AsymmetricResult(f64),

    #[error("{0} is not rho-stabilizing")]
    NotStabilizing(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("law requires the comparison regime f = 0, G = 0: {0}")]
    RegimeViolation(String),

    #[error("non-finite state encountered at step {step} (t = {time})")]
    NonFiniteState { step: usize, time: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown field `{field}` (line {line})")]
    UnknownField { field: String, line: usize },

    #[error("missing field `{field}` (line {line})")]
    MissingField { field: String, line: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPsd { .. } => "NotPSD",
            Error::NonPositiveRho(_) => "NonPositiveRho",
            Error::NegativeTime(_) => "NegativeTime",
            Error::InvalidSignal(_) => "InvalidSignal",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::BlowUp { .. } => "BlowUp",
            Error::StepTooCoarse { .. } => "StepTooCoarse",
            Error::ImaginaryAxisEigenvalue { .. } => "ImaginaryAxisEigenvalue",
            Error::SubspaceNotGraph => "SubspaceNotGraph",
            Error::AsymmetricResult(_) => "AsymmetricResult",
            Error::NotStabilizing(_) => "NotStabilizing",
            Error::GridMismatch(_) => "GridMismatch",
            Error::RegimeViolation(_) => "RegimeViolation",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::Parse { .. } => "ParseError",
            Error::UnknownField { .. } => "UnknownField",
            Error::MissingField { .. } => "MissingField",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "IoError",
        }
    }

    pub(crate) fn dims(what: &str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            what: what.to_string(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }
}
