//! Numeric kernels shared by the threshold solvers, the random-matrix checks
//! and the finite-size extrapolation.

mod quadrature;
mod regression;
mod roots;
mod special;

pub use quadrature::{gauss_hermite, integrate, integrate_split, AdaptiveEstimate, QuadratureRule};
pub use regression::{polyfit_quadratic, QuadraticFit, WeightedPoint};
pub use roots::{find_root, find_root_with, RootOptions};
pub use special::{gauss_mass, gauss_pdf, h_tail};
