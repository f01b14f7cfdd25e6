//! Marchenko-Pastur spectrum of `F^T F` for an i.i.d. Gaussian `P x N`
//! matrix with entry variance `1/N`, and the transforms built on it.
//!
//! With `alpha = P/N` the spectral density is
//! `(1 - alpha) delta(lambda) + sqrt((lambda_+ - lambda)(lambda - lambda_-)) / (2 pi lambda)`
//! on `[lambda_-, lambda_+] = [(1 - sqrt(alpha))^2, (1 + sqrt(alpha))^2]`.
//! Integrals against the continuous part use `lambda = lambda_- + (lambda_+ - lambda_-) sin^2(theta)`,
//! which turns the square-root edges into a smooth integrand on `[0, pi/2]`.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{find_root_with, integrate, RootOptions};
use crate::streams::{stream, Purpose};

pub const MAX_MOMENT: usize = 8;
pub const MAX_EMPIRICAL_N: usize = 1024;
pub const MAX_EMPIRICAL_K: usize = 4;

/// Tolerance of the inner spectral integrals.
const SPECTRAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpDensity {
    pub alpha: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// Mass of the atom at `lambda = 0`.
    pub atom_weight: f64,
}

impl MpDensity {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param(format!("aspect ratio must lie in (0, 1], got {alpha}")));
        }
        let root = alpha.sqrt();
        Ok(MpDensity {
            alpha,
            lambda_minus: (1.0 - root).powi(2),
            lambda_plus: (1.0 + root).powi(2),
            atom_weight: 1.0 - alpha,
        })
    }

    /// Continuous part of the density; the atom is never included.
    pub fn continuous(&self, lambda: f64) -> f64 {
        if !(lambda > self.lambda_minus && lambda < self.lambda_plus) {
            return 0.0;
        }
        ((self.lambda_plus - lambda) * (lambda - self.lambda_minus)).sqrt() / (2.0 * PI * lambda)
    }

    /// `int f(lambda) rho_c(lambda) dlambda` over the support.
    ///
    /// `f` receives `(lambda, sin^2(theta), cos^2(theta))`; the last two let
    /// callers form `lambda - lambda_-` and `lambda_+ - lambda` without
    /// cancellation.
    pub fn integrate_continuous<F: FnMut(f64, f64, f64) -> f64>(&self, mut f: F, tol: f64) -> f64 {
        let width = self.lambda_plus - self.lambda_minus;
        integrate(
            |theta| {
                let (s, c) = theta.sin_cos();
                let (s2, c2) = (s * s, c * c);
                let lambda = self.lambda_minus + width * s2;
                // rho_c dlambda = width^2 s^2 c^2 / (pi lambda) dtheta
                let weight = if self.lambda_minus > 0.0 {
                    width * width * s2 * c2 / (PI * lambda)
                } else {
                    width * c2 / PI
                };
                weight * f(lambda, s2, c2)
            },
            0.0,
            FRAC_PI_2,
            tol,
            tol,
        )
        .value
    }

    /// `int lambda^k d rho`, atom included.
    pub fn moment(&self, k: usize) -> Result<f64> {
        if k > MAX_MOMENT {
            return Err(Error::param(format!("moment order must be at most {MAX_MOMENT}, got {k}")));
        }
        let continuous = self.integrate_continuous(|lambda, _, _| lambda.powi(k as i32), SPECTRAL_TOL);
        Ok(if k == 0 { self.atom_weight + continuous } else { continuous })
    }

    /// `x(w) = int rho(lambda) / (1/w - lambda) dlambda`, the Stieltjes
    /// transform written in `w = 1/Lambda`. Requires `w <= 1/lambda_+`.
    fn stieltjes_in_w(&self, w: f64) -> f64 {
        let width = self.lambda_plus - self.lambda_minus;
        let gap = 1.0 - w * self.lambda_plus;
        // 1 - w lambda = gap + w width cos^2(theta)
        self.atom_weight * w
            + self.integrate_continuous(|_, _, c2| w / (gap + w * width * c2), SPECTRAL_TOL)
    }

    /// Solves `stieltjes(1/w) = x` for `w = 1/Lambda`.
    fn inverse_w(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x == 0.0 {
            return Err(Error::Domain(format!("no finite Lambda for x = {x}")));
        }
        let residual = |w: f64| self.stieltjes_in_w(w) / x - 1.0;
        let bracket = if x > 0.0 {
            let edge = 1.0 / self.lambda_plus;
            if self.stieltjes_in_w(edge) < x {
                return Err(Error::Domain(format!(
                    "x = {x} exceeds the value {} reached at the upper spectral edge",
                    self.stieltjes_in_w(edge)
                )));
            }
            (0.0, edge)
        } else {
            let mut lo = -1.0;
            let mut tries = 0;
            while self.stieltjes_in_w(lo) > x {
                lo *= 2.0;
                tries += 1;
                if tries > 60 {
                    return Err(Error::Domain(format!("no Lambda < 0 reaches x = {x}")));
                }
            }
            (lo, 0.0)
        };
        let opts = RootOptions { f_tol: 1e-15, x_tol: 1e-16, ..RootOptions::new(1e-15) };
        find_root_with(residual, bracket, RootOptions { max_expansions: 0, ..opts })
    }
}

pub fn mp_continuous(alpha: f64, lambda: f64) -> Result<f64> {
    Ok(MpDensity::new(alpha)?.continuous(lambda))
}

pub fn mp_moment(alpha: f64, k: usize) -> Result<f64> {
    MpDensity::new(alpha)?.moment(k)
}

/// Stieltjes transform `int rho(lambda) / (Lambda - lambda) dlambda` for
/// `Lambda` outside `[min(0, lambda_-), lambda_+]`.
pub fn stieltjes(alpha: f64, big_lambda: f64) -> Result<f64> {
    let mp = MpDensity::new(alpha)?;
    if !(big_lambda >= mp.lambda_plus || big_lambda < 0.0) {
        return Err(Error::Domain(format!("Lambda = {big_lambda} is inside the spectrum")));
    }
    Ok(mp.stieltjes_in_w(1.0 / big_lambda))
}

/// Solves `x = int rho(lambda) / (Lambda - lambda) dlambda` for the real
/// `Lambda` outside the spectrum. `x > 0` gives `Lambda > lambda_+`,
/// `x < 0` gives `Lambda < 0`.
pub fn cauchy_lambda(alpha: f64, x: f64) -> Result<f64> {
    Ok(1.0 / MpDensity::new(alpha)?.inverse_w(x)?)
}

/// Interval of `x` on which [`g_transform`] is evaluated.
pub fn g_domain(alpha: f64) -> (f64, f64) {
    (-2.0, (0.99 / (1.0 + alpha.sqrt())).min(0.5))
}

/// `G(x) = 1/2 int_0^x (Lambda(t) - 1/t) dt`, with `Lambda` from
/// [`cauchy_lambda`]. The integrand tends to the first moment as `t -> 0`.
pub fn g_transform(alpha: f64, x: f64) -> Result<f64> {
    let mp = MpDensity::new(alpha)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let first = mp.moment(1)?;
    let failure: Cell<Option<Error>> = Cell::new(None);
    let integrand = |t: f64| {
        if t == 0.0 {
            return first;
        }
        match mp.inverse_w(t) {
            // Lambda - 1/t = 1/w - 1/t
            Ok(w) => (t - w) / (w * t),
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let (lo, hi, sign) = if x > 0.0 { (0.0, x, 0.5) } else { (x, 0.0, -0.5) };
    let value = integrate(integrand, lo, hi, 1e-11, 1e-11).value;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(sign * value),
    }
}

/// Known closed form of [`g_transform`] for this spectrum.
pub fn g_closed_form(alpha: f64, x: f64) -> f64 {
    -0.5 * alpha * (-x).ln_1p()
}

/// Monte Carlo estimates of `(1/N) tr((Xi^T Xi)^k)` for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMoments {
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Samples `samples` matrices `Xi` (`p x n`, entries `N(0, 1/n)`) and
/// averages trace moments computed by repeated multiplication of `Xi Xi^T`.
/// Sample `i` uses its own stream, so the result does not depend on threads.
pub fn empirical_spectral_moments(
    p: usize,
    n: usize,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<SpectralMoments> {
    if n == 0 || n > MAX_EMPIRICAL_N {
        return Err(Error::param(format!("N must lie in 1..={MAX_EMPIRICAL_N}, got {n}")));
    }
    if p == 0 || p > n {
        return Err(Error::param(format!("P must lie in 1..=N, got {p}")));
    }
    if k_max == 0 || k_max > MAX_EMPIRICAL_K {
        return Err(Error::param(format!("k_max must lie in 1..={MAX_EMPIRICAL_K}, got {k_max}")));
    }
    if samples == 0 {
        return Err(Error::param("need at least one sample"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64, Purpose::Spectrum);
            let data: Vec<f64> = (0..p * n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let xi = DMatrix::from_row_slice(p, n, &data);
            let gram = &xi * xi.transpose();
            let mut power = gram.clone();
            let mut traces = Vec::with_capacity(k_max);
            for k in 1..=k_max {
                if k > 1 {
                    power = &power * &gram;
                }
                traces.push(power.trace() / n as f64);
            }
            traces
        })
        .collect();
    let count = samples as f64;
    let mut means = vec![0.0; k_max];
    let mut std_errors = vec![0.0; k_max];
    for k in 0..k_max {
        let mean = per_sample.iter().map(|t| t[k]).sum::<f64>() / count;
        means[k] = mean;
        if samples > 1 {
            let var = per_sample.iter().map(|t| (t[k] - mean).powi(2)).sum::<f64>() / (count - 1.0);
            std_errors[k] = (var / count).sqrt();
        }
    }
    Ok(SpectralMoments { means, std_errors })
}
