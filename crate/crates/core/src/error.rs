use thiserror::Error;

/// Errors raised by the estimation and testing machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid divergence: {0}")]
    InvalidDivergence(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("integral does not converge: {0}")]
    NonIntegrable(String),
    #[error("density vanishes at a point of the signed-measure model")]
    Singular,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("sample-size planning impossible: {0}")]
    PlanningImpossible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
