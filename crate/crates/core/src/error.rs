use thiserror::Error;

use crate::grid::Grid;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: left grid {left}, right grid {right}")]
    GridMismatch { left: Grid, right: Grid },

    #[error("time {t} is not a multiple of the cell width {h}")]
    NotGridMultiple { t: f64, h: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("renewal solve blew up (pivot 1 - h*phi_0 = {pivot:e}); reduce ‖φ‖₁ (set l1_target) or refine the grid")]
    RenewalBlowUp { pivot: f64 },

    #[error("horizon too small: requested {requested} cells but only {available} are available")]
    HorizonTooSmall { requested: usize, available: usize },

    #[error("interval ordering violated: expected {lo} < {hi}")]
    Ordering { lo: f64, hi: f64 },

    #[error("support violation: {0}")]
    Support(String),

    #[error("divisibility violation: {0}")]
    Divisibility(String),

    #[error("profile is not strictly decreasing: {0}")]
    NonMonotone(String),

    #[error("root find did not converge for target {target}")]
    RootFind { target: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("truncation too coarse: dropped measure {remainder:e} exceeds the allowed slack {slack:e}")]
    TruncationTooCoarse { remainder: f64, slack: f64 },

    #[error("operator not boundedly invertible: smallest singular value {sigma:e} at h = {h}")]
    NotInvertible { sigma: f64, h: f64 },
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::RenewalBlowUp { .. }
                | Error::RootFind { .. }
                | Error::NotInvertible { .. }
                | Error::TruncationTooCoarse { .. }
        )
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
