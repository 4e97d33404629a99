use thiserror::Error;

/// Errors raised by the estimation and testing routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("adjacency matrix has a nonzero diagonal entry at node {node}")]
    NonZeroDiagonal { node: usize },

    #[error("node index {index} out of range for {dim} nodes")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("column {column} is constant and cannot be standardized")]
    ConstantColumn { column: usize },

    #[error("{solver} did not converge within {iterations} iterations")]
    NoConvergence { solver: &'static str, iterations: usize },

    #[error("too few samples: {samples} available, {required} required")]
    TooFewSamples { samples: usize, required: usize },

    #[error("lambda grid is empty")]
    EmptyGrid,

    #[error("no neighborhood fit supplied for node {node}")]
    MissingFit { node: usize },

    #[error("information matrix for condition {condition} is singular")]
    SingularInformation { condition: usize },

    #[error("pathway has no members")]
    EmptyPathway,

    #[error("residuals are degenerate (all residual vectors have zero variance)")]
    DegenerateResiduals,

    #[error("REML requires N - 2p > 0 (N = {total}, p = {p})")]
    InsufficientDegreesOfFreedom { total: usize, p: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid edge constraints: {0}")]
    InvalidConstraints(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
