use thiserror::Error;

use crate::lattice::Site;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} {value} lies outside the domain")]
    OutOfDomain { what: &'static str, value: String },

    #[error("rotation is singular at site ({}, {})", site[0], site[1])]
    SingularTransform { site: Site },

    #[error("operator factorization failed: {0}")]
    SingularOperator(String),

    #[error("expansion does not converge ({context}): contraction factor {factor:.6}")]
    NoConvergence { context: String, factor: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),

    #[error("truncation window too small: stability delta {delta:.3e} exceeds {tolerance:.3e}")]
    WindowTooSmall { delta: f64, tolerance: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
