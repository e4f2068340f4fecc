//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by models, the solver, and the integrators.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An evaluation point lies outside the model's declared domain.
    #[error("point outside model domain: {0}")]
    Domain(String),

    /// The velocity Hessian is singular or too ill-conditioned to trust.
    #[error("non-regular Lagrangian: {0}")]
    NonRegularLagrangian(String),

    /// A Newton iteration failed to converge.
    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),

    /// Two curves on incompatible grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
