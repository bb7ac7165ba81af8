use thiserror::Error;

use crate::qp::DualSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {0:+} has no samples")]
    MissingClass(i8),

    #[error("label {value} at row {row} is not +1 or -1")]
    InvalidLabel { row: usize, value: i64 },

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("class means coincide; the population term is undefined")]
    DegenerateMeans,

    #[error("solver stopped after {iterations} iterations without reaching tolerance (max KKT residual {residual:.3e})")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<DualSolution>,
    },

    #[error("no point satisfies the equality constraint within the box")]
    InfeasibleProblem,

    #[error("cannot split {n} samples into {k} folds: {reason}")]
    TooFewSamples { n: usize, k: usize, reason: String },

    #[error("every tuning candidate failed on at least one inner fold")]
    AllCandidatesFailed,

    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-numeric feature '{value}' at row {row}, column '{column}'")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column '{0}' not found")]
    MissingLabelColumn(String),

    #[error("positive class '{0}' does not occur in the label column")]
    UnknownPositiveClass(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Solver,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpec(_) | Error::InvalidConfig(_) => ErrorKind::Usage,
            Error::MaxIterationsExceeded { .. }
            | Error::InfeasibleProblem
            | Error::AllCandidatesFailed => ErrorKind::Solver,
            _ => ErrorKind::Data,
        }
    }
}
