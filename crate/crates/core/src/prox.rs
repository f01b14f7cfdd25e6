//! Minimization of `(Q/2) x^T Rt x - h^T sqrt(Rt) x + |x|_1` over `x in R^N`,
//! the inner problem of the threshold computation for a general positive
//! definite column correlation `Rt`.
//!
//! Cyclic coordinate descent: with the other coordinates fixed, the
//! objective in `x_i` is `(Q Rt_ii / 2) x_i^2 - c_i x_i + |x_i|`, minimized by
//! `soft(c_i, 1) / (Q Rt_ii)`. Each update can only lower the objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sensing::matrix_sqrt_sym;

/// Sweeps stop once no coordinate moves by more than this.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Stationarity error required for a run to count as converged.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DeformedProblem {
    rt: DMatrix<f64>,
    sqrt_rt: DMatrix<f64>,
    h: DVector<f64>,
    q_hat: f64,
    /// `sqrt(Rt)^T h`
    linear: DVector<f64>,
}

impl DeformedProblem {
    /// Uses the Cholesky square root `S = L^T`.
    pub fn new(rt: DMatrix<f64>, h: DVector<f64>, q_hat: f64) -> Result<Self> {
        let sqrt_rt = matrix_sqrt_sym(&rt)?;
        Self::with_sqrt(rt, sqrt_rt, h, q_hat)
    }

    /// Any `S` with `S^T S = Rt`; the objective depends on the choice
    /// through `h^T S x`.
    pub fn with_sqrt(rt: DMatrix<f64>, sqrt_rt: DMatrix<f64>, h: DVector<f64>, q_hat: f64) -> Result<Self> {
        let n = rt.nrows();
        if !rt.is_square() || sqrt_rt.shape() != (n, n) || h.len() != n || n == 0 {
            return Err(Error::param("Rt, sqrt(Rt) and h must have matching dimensions"));
        }
        if !(q_hat > 0.0 && q_hat.is_finite()) {
            return Err(Error::param(format!("Q_hat must be positive, got {q_hat}")));
        }
        if rt.clone().cholesky().is_none() {
            return Err(Error::Factorization("Rt is not positive definite".into()));
        }
        if (sqrt_rt.transpose() * &sqrt_rt - &rt).norm() > 1e-10 * rt.norm() {
            return Err(Error::param("sqrt(Rt)^T sqrt(Rt) does not reproduce Rt"));
        }
        let linear = sqrt_rt.tr_mul(&h);
        Ok(DeformedProblem { rt, sqrt_rt, h, q_hat, linear })
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn rt(&self) -> &DMatrix<f64> {
        &self.rt
    }

    pub fn sqrt_rt(&self) -> &DMatrix<f64> {
        &self.sqrt_rt
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    /// Objective without the `1/N` factor.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.q_hat * x.dot(&(&self.rt * x)) - self.linear.dot(x) + x.lp_norm(1)
    }

    /// Largest violation of `0 in Q Rt x - sqrt(Rt)^T h + d|x|_1`.
    pub fn certificate_error(&self, x: &DVector<f64>) -> f64 {
        let grad = self.q_hat * (&self.rt * x) - &self.linear;
        (0..x.len())
            .map(|i| {
                if x[i] == 0.0 {
                    (grad[i].abs() - 1.0).max(0.0)
                } else {
                    (grad[i] + x[i].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub x_min: DVector<f64>,
    /// Objective at `x_min` divided by `N`.
    pub value: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub certificate_error: f64,
}

fn soft(v: f64) -> f64 {
    if v > 1.0 {
        v - 1.0
    } else if v < -1.0 {
        v + 1.0
    } else {
        0.0
    }
}

pub fn phi_tilde_min(problem: &DeformedProblem) -> Result<ProxSolution> {
    let n = problem.dim();
    let q = problem.q_hat;
    let rt = &problem.rt;
    let mut x = DVector::zeros(n);
    // grad_quad = Q Rt x, kept in sync with x
    let mut quad = DVector::zeros(n);
    let mut previous = problem.objective(&x);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut largest_step: f64 = 0.0;
        for i in 0..n {
            let curvature = q * rt[(i, i)];
            let c = problem.linear[i] - (quad[i] - curvature * x[i]);
            let updated = soft(c) / curvature;
            let step = updated - x[i];
            if step != 0.0 {
                x[i] = updated;
                quad.axpy(q * step, &rt.column(i), 1.0);
                largest_step = largest_step.max(step.abs());
            }
        }
        let current = problem.objective(&x);
        if current > previous + 1e-12 * (1.0 + previous.abs()) {
            return Err(Error::Internal(format!("objective increased from {previous} to {current} in sweep {sweeps}")));
        }
        previous = current;
        if largest_step <= STEP_TOLERANCE {
            quad = q * (rt * &x);
            if problem.certificate_error(&x) <= CERTIFICATE_TOLERANCE {
                converged = true;
                break;
            }
        }
    }
    Ok(ProxSolution {
        value: problem.objective(&x) / n as f64,
        certificate_error: problem.certificate_error(&x),
        x_min: x,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Exhaustive search on `[-5, 5]^2` with spacing `step`.
    fn grid_min_2d(p: &DeformedProblem, step: f64) -> DVector<f64> {
        let m = (10.0 / step).round() as usize;
        let b = &p.linear;
        let r = &p.rt;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=m {
            let a = -5.0 + i as f64 * step;
            for j in 0..=m {
                let c = -5.0 + j as f64 * step;
                let v = 0.5 * p.q_hat * (r[(0, 0)] * a * a + 2.0 * r[(0, 1)] * a * c + r[(1, 1)] * c * c)
                    - b[0] * a
                    - b[1] * c
                    + a.abs()
                    + c.abs();
                if v < best.0 {
                    best = (v, a, c);
                }
            }
        }
        DVector::from_vec(vec![best.1, best.2])
    }

    #[test]
    fn identity_reduces_to_soft_threshold() {
        let h = DVector::from_vec(vec![3.0, -0.5, 1.0, -2.5, 0.0]);
        let p = DeformedProblem::new(DMatrix::identity(5, 5), h.clone(), 1.0).unwrap();
        let sol = phi_tilde_min(&p).unwrap();
        assert!(sol.converged);
        for i in 0..5 {
            assert!((sol.x_min[i] - soft(h[i])).abs() < 1e-14);
        }
        let expected: f64 = h.iter().map(|&v| -0.5 * soft(v).powi(2)).sum::<f64>() / 5.0;
        assert!((sol.value - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_field_gives_origin() {
        let rt = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let sol = phi_tilde_min(&DeformedProblem::new(rt, DVector::zeros(2), 1.3).unwrap()).unwrap();
        assert_eq!(sol.x_min, DVector::zeros(2));
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn correlated_pair_matches_grid_search() {
        let rt = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let p = DeformedProblem::new(rt, DVector::from_vec(vec![3.0, 0.0]), 1.0).unwrap();
        let sol = phi_tilde_min(&p).unwrap();
        assert!(sol.converged && sol.certificate_error <= 1e-8);
        let grid = grid_min_2d(&p, 1e-3);
        assert!((&sol.x_min - grid).amax() <= 2e-3, "{:?}", sol.x_min);
    }

    #[test]
    fn random_pairs_match_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let b = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let rt = b.transpose() * &b + DMatrix::identity(2, 2) * 0.5;
            let h = DVector::from_fn(2, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let p = DeformedProblem::new(rt, h, 1.0 + rng.random::<f64>()).unwrap();
            let sol = phi_tilde_min(&p).unwrap();
            assert!(sol.certificate_error <= 1e-8);
            if sol.x_min.amax() < 4.5 {
                assert!((&sol.x_min - grid_min_2d(&p, 2e-3)).amax() <= 4e-3);
            }
        }
    }

    #[test]
    fn scaling_keeps_certificate() {
        let rt = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, -0.3, 0.1, -0.3, 1.0]);
        let h = DVector::from_vec(vec![2.0, -3.0, 0.7]);
        for &c in &[0.5, 1.0, 4.0] {
            let p = DeformedProblem::new(rt.clone(), &h * c, 0.8 * c).unwrap();
            let sol = phi_tilde_min(&p).unwrap();
            assert!(sol.converged && sol.certificate_error <= 1e-8, "c={c}");
        }
    }

    #[test]
    fn larger_problem_converges_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
        let rt = b.transpose() * &b + DMatrix::identity(n, n) * 0.2;
        let h = DVector::from_fn(n, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let p = DeformedProblem::new(rt, h, 1.0).unwrap();
        let sol = phi_tilde_min(&p).unwrap();
        assert!(sol.converged && sol.certificate_error <= 1e-8);
        // Any perturbation raises the objective.
        let best = p.objective(&sol.x_min);
        for i in 0..n {
            for &d in &[-1e-4, 1e-4] {
                let mut x = sol.x_min.clone();
                x[i] += d;
                assert!(p.objective(&x) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn invalid_problems() {
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            DeformedProblem::new(indefinite, DVector::zeros(2), 1.0),
            Err(Error::Factorization(_))
        ));
        assert!(DeformedProblem::new(DMatrix::identity(2, 2), DVector::zeros(3), 1.0).is_err());
        assert!(DeformedProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).is_err());
        let wrong_root = DMatrix::identity(2, 2) * 2.0;
        assert!(DeformedProblem::with_sqrt(DMatrix::identity(2, 2), wrong_root, DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn symmetric_root_is_accepted() {
        let rt = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let bc = crate::threshold::BlockCorrelation::new(0.6).unwrap();
        let m = bc.matrices().sqrt_rt_block;
        let s = DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
        let p = DeformedProblem::with_sqrt(rt, s, DVector::from_vec(vec![2.0, -1.0]), 1.0).unwrap();
        assert!(phi_tilde_min(&p).unwrap().certificate_error <= 1e-8);
    }
}
