use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sparseness description violates its invariants.
    #[error("invalid sparseness specification: {0}")]
    InvalidSpec(String),

    /// A quadrature or fit did not reach the requested accuracy.
    #[error("tolerance not met for {what}: achieved {achieved:.3e}, requested {requested:.3e}")]
    Tolerance {
        what: String,
        achieved: f64,
        requested: f64,
    },

    /// High-precision arithmetic could not deliver the required accuracy.
    #[error("precision failure: {0}")]
    Precision(String),

    /// A fitted model does not describe the sampled data.
    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    /// Two jets (or a jet and a coefficient list) have incompatible orders.
    #[error("order mismatch: expected {expected}, found {found}")]
    OrderMismatch { expected: usize, found: usize },

    /// Jets expanded at different points were combined.
    #[error("base point mismatch: {0} vs {1}")]
    BasePointMismatch(f64, f64),

    /// Division by a jet whose constant term vanishes.
    #[error("division by a jet with zero constant term")]
    JetDivisionByZero,

    /// Input data carries no usable information.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A required resource limit would be exceeded.
    #[error("resource limit: {0}")]
    ResourceLimit(String),
}

/// Coarse classification used by front ends to map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Domain,
    Tolerance,
    Input,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Tolerance { .. } | Error::Precision(_) | Error::ModelMismatch(_) => {
                ErrorClass::Tolerance
            }
            Error::Domain(_) | Error::JetDivisionByZero | Error::ResourceLimit(_) => {
                ErrorClass::Domain
            }
            Error::InvalidSpec(_)
            | Error::OrderMismatch { .. }
            | Error::BasePointMismatch(..)
            | Error::Degenerate(_) => ErrorClass::Input,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
