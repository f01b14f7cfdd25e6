use std::f64::consts::PI;

use super::{ThresholdPoint, LOG_CHI_BRACKET};
use crate::error::{Error, Result};
use crate::numerics::{find_root_with, h_tail, RootOptions};

/// Both equations of the i.i.d. threshold at a trial `chi_hat`.
///
/// Returns `(alpha, residual)` with
/// `alpha = 2(1-rho) H(1/sqrt(chi)) + rho` and
/// `residual = chi - [2(1-rho)((chi+1) H - sqrt(chi/2pi) exp(-1/(2chi))) + rho(chi+1)] / alpha`.
///
/// `rho (chi + 1)` is a separate term, not part of the `2(1-rho)` bracket;
/// that is the grouping that the r = 0 block model reduces to.
pub fn universal_residual(chi_hat: f64, rho: f64) -> Result<(f64, f64)> {
    if !(chi_hat > 0.0 && chi_hat.is_finite()) {
        return Err(Error::param(format!("chi_hat must be positive and finite, got {chi_hat}")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param(format!("rho must lie in (0, 1], got {rho}")));
    }
    let tail = h_tail(1.0 / chi_hat.sqrt());
    let alpha = 2.0 * (1.0 - rho) * tail + rho;
    let gauss_term = (chi_hat / (2.0 * PI)).sqrt() * (-0.5 / chi_hat).exp();
    let bracket = 2.0 * (1.0 - rho) * ((chi_hat + 1.0) * tail - gauss_term) + rho * (chi_hat + 1.0);
    Ok((alpha, chi_hat - bracket / alpha))
}

/// Solves the i.i.d. threshold at density `rho`.
///
/// `rho = 1` is accepted and returns the dense boundary `alpha = 1` with no
/// `chi_hat`.
pub fn universal_threshold(rho: f64) -> Result<ThresholdPoint> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param(format!("rho must lie in (0, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Ok(ThresholdPoint::dense_boundary(rho, 0.0));
    }
    // Eliminating alpha leaves rho = 2(1-rho)[phi(t)/t - H(t)] with
    // t = 1/sqrt(chi_hat). The left side is strictly decreasing in t, so the
    // root is unique; solving it in ln t stays well conditioned even when
    // chi_hat is huge (rho near 1), where the original residual cancels.
    let opts = RootOptions { f_tol: 1e-15, x_tol: 1e-15, ..RootOptions::new(1e-15) };
    let log_t = find_root_with(
        |u| {
            let t = u.exp();
            let density = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
            2.0 * (1.0 - rho) * (density / t - h_tail(t)) / rho - 1.0
        },
        (-0.5 * LOG_CHI_BRACKET.1, -0.5 * LOG_CHI_BRACKET.0),
        opts,
    )?;
    let log_chi = -2.0 * log_t;
    let chi_hat = log_chi.exp();
    let (alpha, residual) = universal_residual(chi_hat, rho)?;
    Ok(ThresholdPoint { rho, r: 0.0, alpha, chi_hat: Some(chi_hat), residual: residual.abs() })
}

/// Solves [`universal_threshold`] along a sorted density grid.
pub fn universal_curve(rho_grid: &[f64]) -> Result<Vec<ThresholdPoint>> {
    if rho_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("rho grid must be strictly increasing"));
    }
    rho_grid
        .iter()
        .map(|&rho| universal_threshold(rho).map_err(|e| Error::AtRho { rho, source: Box::new(e) }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gauss_pdf;

    /// Threshold alpha from the chi-eliminated form
    /// `rho = 2(1-rho)(phi(t)/t - H(t))`, `t = 1/sqrt(chi)`, with H from
    /// Simpson quadrature of the density and plain bisection.
    fn alpha_oracle(rho: f64) -> f64 {
        let tail = |t: f64| {
            let n = 200_000;
            let upper = t + 40.0;
            let h = (upper - t) / n as f64;
            let mut acc = gauss_pdf(t) + gauss_pdf(upper);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * gauss_pdf(t + i as f64 * h);
            }
            acc * h / 3.0
        };
        let g = |t: f64| 2.0 * (1.0 - rho) * (gauss_pdf(t) / t - tail(t)) - rho;
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * (1.0 - rho) * tail(0.5 * (lo + hi)) + rho
    }

    #[test]
    fn dense_signal_gives_alpha_one() {
        for &chi in &[1e-3, 0.5, 7.0, 1e4] {
            let (alpha, _) = universal_residual(chi, 1.0).unwrap();
            assert_eq!(alpha, 1.0);
        }
        let point = universal_threshold(1.0).unwrap();
        assert_eq!(point.alpha, 1.0);
        assert_eq!(point.chi_hat, None);
    }

    #[test]
    fn small_chi_limit() {
        let (alpha, _) = universal_residual(1e-4, 0.3).unwrap();
        assert!((alpha - 0.3).abs() < 1e-12);
    }

    #[test]
    fn residual_changes_sign_on_scan() {
        let signs: Vec<bool> = (0..=120)
            .map(|i| 10f64.powf(-6.0 + 0.1 * i as f64))
            .map(|chi| universal_residual(chi, 0.5).unwrap().1 > 0.0)
            .collect();
        assert!(!signs[0] && signs[120]);
        assert_eq!(signs.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }

    #[test]
    fn matches_independent_oracle() {
        for &rho in &[0.1, 0.5] {
            let point = universal_threshold(rho).unwrap();
            let oracle = alpha_oracle(rho);
            assert!((point.alpha - oracle).abs() < 1e-8, "rho={rho}: {} vs {oracle}", point.alpha);
            assert!(point.alpha > rho && point.alpha < 1.0);
        }
    }

    #[test]
    fn fixed_point_consistency() {
        for i in 1..10 {
            let rho = 0.1 * i as f64;
            let p = universal_threshold(rho).unwrap();
            let chi = p.chi_hat.unwrap();
            assert!(chi > 0.0 && chi.is_finite());
            assert!((p.alpha - 2.0 * (1.0 - rho) * h_tail(1.0 / chi.sqrt()) - rho).abs() <= 1e-9);
            assert!(p.residual <= 1e-9);
        }
    }

    #[test]
    fn near_one_approaches_one() {
        let p = universal_threshold(0.999).unwrap();
        assert!(p.alpha > 0.9999 && p.alpha < 1.0, "{p:?}");
    }

    #[test]
    fn curve_is_monotone_and_consistent() {
        assert!(universal_curve(&[]).unwrap().is_empty());
        let single = universal_curve(&[0.5]).unwrap();
        assert_eq!(single[0], universal_threshold(0.5).unwrap());
        let curve = universal_curve(&[0.2, 0.4, 0.6, 0.8]).unwrap();
        assert!(curve.windows(2).all(|w| w[0].alpha < w[1].alpha));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(universal_residual(0.0, 0.5), Err(Error::Parameter(_))));
        assert!(matches!(universal_threshold(0.0), Err(Error::Parameter(_))));
        assert!(matches!(universal_curve(&[0.5, 1.5]), Err(Error::AtRho { .. })));
    }
}
