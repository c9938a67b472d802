use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not chordal")]
    NotChordal,

    #[error("invalid graph family spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{states} states exceed the enumeration cap of {cap}")]
    TooLargeToEnumerate { states: u128, cap: u128 },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("support sub-block of the incoherence matrix is singular")]
    SingularSubmatrix,

    #[error("missing-data rate {0} is outside [0, 1)")]
    InvalidRho(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("graphical lasso objective is unbounded below for this covariance")]
    UnboundedObjective,

    #[error("{count} regression features exceed the cap of {cap}")]
    FeatureExplosion { count: usize, cap: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
