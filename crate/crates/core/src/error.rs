use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violates a value invariant (Hermiticity, trace, positivity, normalization).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Dimensions or subsystem labels do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Optimizer or ancilla configuration cannot work for the given input.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A code outcome has zero probability and no fallback was allowed.
    #[error("degenerate branch: {0}")]
    DegenerateBranch(String),
    /// The requested computation exceeds the dense-solver budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    /// Malformed exchange file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json messages already end with "at line L column C"
        Error::Parse(e.to_string())
    }
}
