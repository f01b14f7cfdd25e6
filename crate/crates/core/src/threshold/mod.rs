//! Fixed-point equations for the typical (weak) l1 recovery threshold.
//!
//! Both solvers return points `(rho, alpha)` on the phase boundary together
//! with the conjugate order parameter `chi_hat` at the bifurcation.

pub mod blockwise;
pub mod universal;

pub use blockwise::{
    block_correlation, blockwise_rhs, blockwise_rhs_with, blockwise_threshold, blockwise_threshold_with, omega,
    threshold_surface, v_integrand, w_integrand, x_pair, BlockCorrelation, BlockMatrices, Integration, Sign,
    Support, SurfaceCell, MAX_ABS_R,
};
pub use universal::{universal_curve, universal_residual, universal_threshold};

/// A solved point of the phase boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    /// Fraction of nonzero entries in the signal.
    pub rho: f64,
    /// Pair correlation of the sensing columns (0 for i.i.d. sensing).
    pub r: f64,
    /// Critical compression rate `P/N`.
    pub alpha: f64,
    /// Order parameter at the bifurcation. `None` only at `rho = 1`, where
    /// `alpha = 1` and `chi_hat` is not determined by the equations.
    pub chi_hat: Option<f64>,
    /// `|chi_hat - rhs(chi_hat)|` of the second equation at the returned point.
    pub residual: f64,
}

impl ThresholdPoint {
    pub(crate) fn dense_boundary(rho: f64, r: f64) -> Self {
        ThresholdPoint { rho, r, alpha: 1.0, chi_hat: None, residual: 0.0 }
    }
}

/// Root-finder settings for the fixed points, which are solved in `ln chi_hat`.
pub(crate) const LOG_CHI_BRACKET: (f64, f64) = (-13.815_510_557_964_274, 13.815_510_557_964_274);
