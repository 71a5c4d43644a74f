use thiserror::Error;

/// Errors raised by the conversion library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller violated an API precondition (shape mismatch, double mask, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// User-supplied configuration or data failed validation.
    #[error("invalid input: {0}")]
    Validation(String),
    /// A computed quantity contradicts an exact-arithmetic identity beyond tolerance.
    #[error("numerical consistency: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
