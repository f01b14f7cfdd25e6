use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Gaussian tail `H(x) = (2 pi)^(-1/2) * int_x^inf exp(-t^2/2) dt`.
pub fn h_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal mass of `[a, b]`. Either end may be infinite.
///
/// Differences are taken on the tail that keeps both terms small, so masses
/// far out in either tail keep their relative accuracy.
pub fn gauss_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        h_tail(a) - h_tail(b)
    } else if b <= 0.0 {
        h_tail(-b) - h_tail(-a)
    } else {
        1.0 - h_tail(-a) - h_tail(b)
    }
}
