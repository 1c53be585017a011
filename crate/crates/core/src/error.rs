//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, evaluation, integration, and
/// certification routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A parameter violates its documented constraint (sign, range, count).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The normalized basis denominator fell below floating tolerance.
    #[error("degenerate basis: total activation {0:e} below tolerance")]
    DegenerateBasis(f64),

    /// Integration produced a non-finite state. `t` is the last valid time.
    #[error("trajectory diverged: non-finite state after t = {t}")]
    Divergence { t: f64 },

    /// A periodicity measurement could not find enough section crossings.
    #[error("not periodic: {0}")]
    NotPeriodic(String),

    /// A map was evaluated outside its valid domain (e.g. a diffeomorphism
    /// inverse failed).
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be invertible or positive definite is not.
    #[error("singular or indefinite matrix: {0}")]
    Singular(String),

    /// A stated precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numerical construction failed to converge; the message carries
    /// diagnostics.
    #[error("build failure: {0}")]
    BuildFailure(String),

    /// A least-squares problem is too ill-conditioned to solve as posed.
    #[error("conditioning: {0}")]
    Conditioning(String),

    /// The requested combination has no supported composition rule.
    #[error("unsupported: {0}")]
    Unsupported(String),
}
