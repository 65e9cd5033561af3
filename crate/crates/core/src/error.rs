use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("not in attractor hull: x = {x} outside [{lo}, {hi}]")]
    NotInHull { x: f64, lo: f64, hi: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bracket expansion failed: {0}")]
    BracketFailure(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("finite-difference stencil leaves the open simplex")]
    StencilOutOfSimplex,
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("alpha = {alpha} outside [{lo}, {hi}]")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidSystem(_)
                | Error::InvalidProbability(_)
                | Error::InvalidTolerance(_)
                | Error::InvalidArgument(_)
                | Error::Unsupported(_)
                | Error::NotInHull { .. }
                | Error::AlphaOutOfRange { .. }
                | Error::StencilOutOfSimplex
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}
