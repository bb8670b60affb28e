//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by measure evaluation, growing families, solvers and simulations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point lies outside the declared support or domain of a map.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration is malformed, unknown or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// An input violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A quadrature was detected to diverge.
    #[error("divergent integral: {0}")]
    Divergent(String),
    /// Two decorations were supplied in the wrong order.
    #[error("ordering error: {0}")]
    Ordering(String),
    /// An ODE trajectory left the declared domain of its vector field.
    #[error("integration left the domain at {location}: {message}")]
    DomainExit { location: String, message: String },
    /// A construction invariant was broken; indicates a bug.
    #[error("internal consistency error: {0}")]
    Consistency(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
