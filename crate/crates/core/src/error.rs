use thiserror::Error;

/// Errors produced by the numerical engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("state is a product state (Schmidt rank 1)")]
    ProductState,

    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, Error>;
