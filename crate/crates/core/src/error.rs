use thiserror::Error;

/// Errors raised by the solver and its data types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {got} does not match interior node count {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("empty set")]
    EmptySet,
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid Psi: {0}")]
    InvalidPsi(String),
    #[error("constraint violated: g1(u) - g2(u) = {0:e} is not positive")]
    ConstraintViolated(f64),
    #[error("infeasible subspace")]
    InfeasibleSubspace,
    #[error("invalid subspace: {0}")]
    InvalidSubspace(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("usc requires nu2 = 0")]
    UscRequiresZeroNu2,
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("target outside attainable range: {0}")]
    Unattainable(String),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
