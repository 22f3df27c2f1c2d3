//! Special functions, quadrature and root finding.
//!
//! Everything here is a pure function of its arguments.

mod quadrature;
mod roots;
mod special;

use thiserror::Error;

pub(crate) use quadrature::integrate_adaptive_unchecked;
pub use quadrature::{gauss_legendre_grid, integrate, integrate_adaptive, QuadratureSpec};
pub use roots::{find_root_increasing, pearson_correlation};
pub use special::{
    beta_cdf, beta_quantile, ln_beta, normal_cdf, normal_pdf, normal_quantile, BetaDist,
    INV_SQRT_2PI,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge: error estimate {estimate:e} exceeds {tolerance:e}")]
    NotConverged { estimate: f64, tolerance: f64 },
    #[error("invalid bracket: {0}")]
    Bracket(String),
    #[error("input has zero variance")]
    ZeroVariance,
}
