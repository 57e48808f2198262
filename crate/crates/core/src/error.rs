use thiserror::Error;

/// Errors raised by polynomial arithmetic and parsing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
    #[error("substitution arity mismatch: polynomial has {expected} variables, got {got} substitutes")]
    ArityMismatch { expected: usize, got: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
}

/// Errors raised while loading or validating a problem definition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model: {check}: {detail}")]
    Invariant { check: &'static str, detail: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Errors raised by the SOS compiler and the solver adapter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("gram basis degree must be even, got {0}")]
    OddDegree(u32),
    #[error("identity `{identity}`: term of degree {term_degree} exceeds matching degree {matching_degree}")]
    DegreeBookkeeping {
        identity: String,
        term_degree: u32,
        matching_degree: u32,
    },
    #[error("identity `{identity}`: {detail}")]
    MalformedIdentity { identity: String, detail: String },
    #[error("cannot extract from a solution with status {0}")]
    NoSolution(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}
