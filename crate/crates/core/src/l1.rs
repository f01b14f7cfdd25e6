//! Basis pursuit `min |x|_1 subject to F x = y`.
//!
//! The solver is over-relaxed ADMM on the split `x in {F x = y}`, `z` free,
//! `x = z`. The `x` step is an orthogonal projection through a cached
//! Cholesky factor of `F F^T`; the `z` step is soft thresholding at
//! `1/penalty`.
//!
//! With polishing on, the iterate is periodically replaced by the least
//! squares solution on the support of `z`, and a dual vector `nu` is built
//! with `F_S^T nu = sign(x_S)`. The polished point is returned only if it is
//! feasible and `|F^T nu|_inf <= 1` up to a small slack, which proves it
//! optimal; otherwise the iteration just continues.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Iterations between polishing attempts.
const POLISH_EVERY: usize = 25;
/// Allowed excess of `|F^T nu|_inf` over 1 in an accepted certificate.
const CERTIFICATE_SLACK: f64 = 1e-9;
/// Polished entries below this fraction of the largest one are dropped.
const PRUNE_RATIO: f64 = 1e-10;
/// Support completion tries all choices from the `missing + COMPLETION_SPARE`
/// best candidates, but never from more than `MAX_COMPLETION_POOL`.
const COMPLETION_SPARE: usize = 2;
const MAX_COMPLETION_POOL: usize = 8;
/// Residual balancing: rescale when one residual exceeds the other by this.
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_EVERY: usize = 10;
/// Over-relaxation factor of the ADMM `z` and `u` steps.
const RELAXATION: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    /// Initial ADMM penalty; adapted by residual balancing.
    pub penalty: f64,
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 50_000, primal_tolerance: 1e-8, dual_tolerance: 1e-8, penalty: 1.0, polish: true }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        for (name, v) in [
            ("primal_tolerance", self.primal_tolerance),
            ("dual_tolerance", self.dual_tolerance),
            ("penalty", self.penalty),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_star: DVector<f64>,
    pub iterations: usize,
    /// `|F x* - y|_2 / (1 + |y|_2)`
    pub feasibility_residual: f64,
    /// `|x*|_1`
    pub objective: f64,
    pub converged: bool,
    /// Equality multiplier `nu`; `F^T nu` approximates a subgradient of
    /// `|x|_1` at `x*`.
    pub dual: DVector<f64>,
    /// True when `x*` came with a verified optimality certificate.
    pub certified: bool,
    /// `F^T nu`.
    subgradient: DVector<f64>,
    penalty: f64,
}

impl RecoveryResult {
    /// State to start a solve on a problem with the same columns, typically
    /// after deleting rows (the old solution stays feasible).
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { x: self.x_star.clone(), subgradient: self.subgradient.clone(), penalty: self.penalty }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    x: DVector<f64>,
    subgradient: DVector<f64>,
    penalty: f64,
}

/// Norm used to compare a recovered signal with the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecoveryNorm {
    #[default]
    L2,
    LInf,
}

impl std::str::FromStr for RecoveryNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(RecoveryNorm::L2),
            "linf" => Ok(RecoveryNorm::LInf),
            _ => Err(Error::param(format!("unknown norm '{s}' (expected l2 or linf)"))),
        }
    }
}

impl std::fmt::Display for RecoveryNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecoveryNorm::L2 => "l2",
            RecoveryNorm::LInf => "linf",
        })
    }
}

pub const DEFAULT_RECOVERY_TOLERANCE: f64 = 1e-4;

/// Success iff `|x_star - x0|_2 <= tol`.
pub fn check_recovery(x_star: &DVector<f64>, x0: &DVector<f64>, tol: f64) -> Result<bool> {
    check_recovery_with(x_star, x0, tol, RecoveryNorm::L2)
}

pub fn check_recovery_with(x_star: &DVector<f64>, x0: &DVector<f64>, tol: f64, norm: RecoveryNorm) -> Result<bool> {
    if x_star.len() != x0.len() {
        return Err(Error::param(format!("length mismatch: {} vs {}", x_star.len(), x0.len())));
    }
    let diff = x_star - x0;
    let dist = match norm {
        RecoveryNorm::L2 => diff.norm(),
        RecoveryNorm::LInf => diff.amax(),
    };
    Ok(dist <= tol)
}

pub fn basis_pursuit(f: &DMatrix<f64>, y: &DVector<f64>, opts: &SolverOptions) -> Result<RecoveryResult> {
    basis_pursuit_from(f, y, opts, None)
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    f: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    gram: Cholesky<f64, Dyn>,
    y_norm: f64,
}

impl Problem<'_> {
    /// Orthogonal projection of `v` onto `{x : F x = y}`, written into `out`.
    fn project(&self, v: &DVector<f64>, out: &mut DVector<f64>, work: &mut DVector<f64>) {
        work.gemv(1.0, self.f, v, 0.0);
        *work -= self.y;
        self.gram.solve_mut(work);
        out.copy_from(v);
        out.gemv_tr(-1.0, self.f, work, 1.0);
    }

    fn feasibility(&self, x: &DVector<f64>) -> f64 {
        (self.f * x - self.y).norm() / (1.0 + self.y_norm)
    }

    /// Least-squares dual fit: `argmin_nu |F^T nu - g|`.
    fn fit_dual(&self, g: &DVector<f64>) -> DVector<f64> {
        self.gram.solve(&(self.f * g))
    }

    fn finish(
        &self,
        x: DVector<f64>,
        dual: DVector<f64>,
        iterations: usize,
        converged: bool,
        certified: bool,
        penalty: f64,
    ) -> RecoveryResult {
        let subgradient = self.f.tr_mul(&dual);
        RecoveryResult {
            feasibility_residual: self.feasibility(&x),
            objective: x.lp_norm(1),
            x_star: x,
            iterations,
            converged,
            dual,
            certified,
            subgradient,
            penalty,
        }
    }

    /// Least squares on the support of `z` plus a dual certificate, or
    /// `None` if either fails. `g` is the current subgradient estimate.
    ///
    /// If the support of `z` is too small to reproduce `y` (an entry of the
    /// minimizer is still being thresholded away), it is completed to `P`
    /// columns from the indices where `|g|` is largest, i.e. closest to
    /// being active.
    fn polish(&self, z: &DVector<f64>, g: &DVector<f64>, tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let (p, n) = self.f.shape();
        let support: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
        if support.len() > p {
            return None;
        }
        if !support.is_empty() {
            if let Some(found) = self.certify(support.clone(), g, tol) {
                return Some(found);
            }
        }
        let missing = p - support.len();
        if missing == 0 {
            return None;
        }
        let mut rest: Vec<usize> = (0..n).filter(|&i| z[i] == 0.0).collect();
        rest.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
        rest.truncate((missing + COMPLETION_SPARE).min(MAX_COMPLETION_POOL));
        if rest.len() < missing {
            return None;
        }
        // Every way of choosing `missing` indices from the best candidates.
        let mut pick: Vec<usize> = (0..missing).collect();
        loop {
            let mut filled = support.clone();
            filled.extend(pick.iter().map(|&k| rest[k]));
            filled.sort_unstable();
            if let Some(found) = self.certify(filled, g, tol) {
                return Some(found);
            }
            // Next combination in lexicographic order.
            let mut k = missing;
            while k > 0 && pick[k - 1] == rest.len() - missing + k - 1 {
                k -= 1;
            }
            if k == 0 {
                return None;
            }
            pick[k - 1] += 1;
            for j in k..missing {
                pick[j] = pick[j - 1] + 1;
            }
        }
    }

    fn certify(&self, mut support: Vec<usize>, g: &DVector<f64>, tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.f.ncols();
        let mut x_s;
        let mut factor;
        let mut f_s;
        loop {
            f_s = self.f.select_columns(&support);
            factor = (f_s.transpose() * &f_s).cholesky()?;
            x_s = factor.solve(&f_s.tr_mul(self.y));
            let largest = x_s.amax();
            let keep: Vec<usize> =
                (0..support.len()).filter(|&k| x_s[k].abs() > PRUNE_RATIO * largest).collect();
            if keep.len() == support.len() {
                break;
            }
            if keep.is_empty() {
                return None;
            }
            support = keep.into_iter().map(|k| support[k]).collect();
        }
        let mut x = DVector::zeros(n);
        for (k, &i) in support.iter().enumerate() {
            x[i] = x_s[k];
        }
        if self.feasibility(&x) > tol {
            return None;
        }
        // nu = nu0 + F_S (F_S^T F_S)^{-1} (sign(x_S) - F_S^T nu0)
        let nu0 = self.fit_dual(g);
        let signs = x_s.map(f64::signum);
        let correction = factor.solve(&(signs - f_s.tr_mul(&nu0)));
        let nu = nu0 + &f_s * correction;
        let subgradient = self.f.tr_mul(&nu);
        if subgradient.amax() > 1.0 + CERTIFICATE_SLACK {
            return None;
        }
        Some((x, nu))
    }
}

/// [`basis_pursuit`], optionally starting from a previous solution.
pub fn basis_pursuit_from(
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<RecoveryResult> {
    opts.validate()?;
    let (p, n) = f.shape();
    if p == 0 || p > n {
        return Err(Error::param(format!("need 1 <= P <= N, got {p}x{n}")));
    }
    if y.len() != p {
        return Err(Error::param(format!("y has length {}, expected {p}", y.len())));
    }
    if let Some(w) = warm {
        if w.x.len() != n {
            return Err(Error::param("warm start has the wrong dimension"));
        }
    }
    let gram = (f * f.transpose())
        .cholesky()
        .ok_or_else(|| Error::Factorization("F F^T is not positive definite (rank-deficient F)".into()))?;
    let problem = Problem { f, y, gram, y_norm: y.norm() };

    if y.iter().all(|&v| v == 0.0) {
        return Ok(problem.finish(DVector::zeros(n), DVector::zeros(p), 0, true, true, opts.penalty));
    }

    let mut work = DVector::zeros(p);
    let mut x = DVector::zeros(n);
    let mut rho = opts.penalty;
    let (mut z, mut u) = match warm {
        Some(w) => {
            rho = w.penalty;
            (w.x.clone(), &w.subgradient / rho)
        }
        None => {
            problem.project(&DVector::zeros(n), &mut x, &mut work);
            (x.clone(), DVector::zeros(n))
        }
    };
    let mut z_old = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    let mut relaxed = DVector::zeros(n);

    if opts.polish && warm.is_some() {
        if let Some((xp, nu)) = problem.polish(&z, &(&u * rho), opts.primal_tolerance) {
            return Ok(problem.finish(xp, nu, 0, true, true, rho));
        }
    }

    for iter in 1..=opts.max_iterations {
        v.copy_from(&z);
        v -= &u;
        problem.project(&v, &mut x, &mut work);
        std::mem::swap(&mut z, &mut z_old);
        let threshold = 1.0 / rho;
        // Over-relaxed iterate x_hat = a x + (1 - a) z_old.
        for i in 0..n {
            relaxed[i] = RELAXATION * x[i] + (1.0 - RELAXATION) * z_old[i];
            z[i] = soft(relaxed[i] + u[i], threshold);
        }
        u += &relaxed;
        u -= &z;

        let r_primal = (&x - &z).norm();
        let r_dual = rho * (&z - &z_old).norm();
        let stop = r_primal <= opts.primal_tolerance * (1.0 + z.norm())
            && r_dual <= opts.dual_tolerance * (1.0 + rho * u.norm());

        if opts.polish && (stop || iter % POLISH_EVERY == 0) {
            if let Some((xp, nu)) = problem.polish(&z, &(&u * rho), opts.primal_tolerance) {
                return Ok(problem.finish(xp, nu, iter, true, true, rho));
            }
        }
        if stop {
            let nu = problem.fit_dual(&(&u * rho));
            return Ok(problem.finish(x, nu, iter, true, false, rho));
        }

        if iter % BALANCE_EVERY == 0 {
            if r_primal > BALANCE_RATIO * r_dual {
                rho *= 2.0;
                u /= 2.0;
            } else if r_dual > BALANCE_RATIO * r_primal {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let nu = problem.fit_dual(&(&u * rho));
    Ok(problem.finish(x, nu, opts.max_iterations, false, false, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensingInstance;

    fn certificate_gap(res: &RecoveryResult, f: &DMatrix<f64>) -> f64 {
        let g = f.tr_mul(&res.dual);
        let mut gap: f64 = (g.amax() - 1.0).max(0.0);
        for i in 0..g.len() {
            if res.x_star[i].abs() > 1e-7 {
                gap = gap.max(1.0 - g[i] * res.x_star[i].signum());
            }
        }
        gap
    }

    #[test]
    fn single_row() {
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0]);
        let res = basis_pursuit(&f, &y, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.x_star[0] - 1.0).abs() < 1e-9 && res.x_star[1].abs() < 1e-9);
        assert!((res.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_signal() {
        let inst = SensingInstance::sample(10, 20, 0.0, 0.0, 3).unwrap();
        let res = basis_pursuit(&inst.f, &inst.y, &SolverOptions::default()).unwrap();
        assert!(res.converged && res.x_star.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_deep_in_success_phase() {
        for seed in 0..5 {
            let inst = SensingInstance::sample(56, 64, 0.1, 0.0, seed).unwrap();
            let res = basis_pursuit(&inst.f, &inst.y, &SolverOptions::default()).unwrap();
            assert!(res.converged);
            assert!((&res.x_star - &inst.x0.values).norm() <= 1e-6, "seed {seed}");
            assert!(res.feasibility_residual <= 1e-8);
            assert!(certificate_gap(&res, &inst.f) <= 1e-5);
        }
    }

    #[test]
    fn failing_instance_is_certified_optimal() {
        // Far below the threshold: x0 is not the minimizer, but the solver
        // must still return the true l1 minimizer.
        let inst = SensingInstance::sample(20, 64, 0.5, 0.9, 8).unwrap();
        let res = basis_pursuit(&inst.f, &inst.y, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert!(!check_recovery(&res.x_star, &inst.x0.values, 1e-4).unwrap());
        assert!(res.objective <= inst.x0.values.lp_norm(1) + 1e-6);
        assert!(res.feasibility_residual <= 1e-8);
        assert!(certificate_gap(&res, &inst.f) <= 1e-5);
    }

    #[test]
    fn unpolished_run_meets_tolerances() {
        let inst = SensingInstance::sample(40, 64, 0.1, 0.0, 4).unwrap();
        let opts = SolverOptions { polish: false, ..SolverOptions::default() };
        let res = basis_pursuit(&inst.f, &inst.y, &opts).unwrap();
        assert!(res.converged && !res.certified);
        assert!(res.feasibility_residual <= 1e-8);
        assert!((&res.x_star - &inst.x0.values).norm() <= 1e-4);
    }

    #[test]
    fn warm_start_after_row_deletion() {
        let inst = SensingInstance::sample(64, 64, 0.2, 0.5, 12).unwrap();
        let opts = SolverOptions::default();
        let (f, y) = inst.leading_rows(60);
        let first = basis_pursuit(&f, &y, &opts).unwrap();
        let (f, y) = inst.leading_rows(59);
        let cold = basis_pursuit(&f, &y, &opts).unwrap();
        let warm = basis_pursuit_from(&f, &y, &opts, Some(&first.warm_start())).unwrap();
        assert!(warm.converged && cold.converged);
        assert!((&warm.x_star - &cold.x_star).amax() < 1e-8);
        assert!(warm.iterations <= cold.iterations);
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let inst = SensingInstance::sample(30, 64, 0.3, 0.0, 5).unwrap();
        let opts = SolverOptions { max_iterations: 3, polish: false, ..SolverOptions::default() };
        let res = basis_pursuit(&inst.f, &inst.y, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn deterministic() {
        let inst = SensingInstance::sample(30, 64, 0.3, 0.9, 6).unwrap();
        let a = basis_pursuit(&inst.f, &inst.y, &SolverOptions::default()).unwrap();
        let b = basis_pursuit(&inst.f, &inst.y, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_deficient_matrix() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(basis_pursuit(&f, &y, &SolverOptions::default()), Err(Error::Factorization(_))));
    }

    #[test]
    fn recovery_check() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(check_recovery(&a, &a, 1e-4).unwrap());
        let mut b = a.clone();
        b[1] += 1.0;
        assert!(!check_recovery(&b, &a, 1e-4).unwrap());
        let mut c = a.clone();
        c[0] += 9e-5;
        assert!(check_recovery(&c, &a, 1e-4).unwrap());
        assert!(check_recovery(&a, &DVector::zeros(2), 1e-4).is_err());
        let mut d = a.clone();
        d[0] += 8e-5;
        d[1] += 8e-5;
        assert!(!check_recovery(&d, &a, 1e-4).unwrap());
        assert!(check_recovery_with(&d, &a, 1e-4, RecoveryNorm::LInf).unwrap());
    }

    #[test]
    fn invalid_options() {
        let f = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let bad = SolverOptions { penalty: 0.0, ..SolverOptions::default() };
        assert!(basis_pursuit(&f, &y, &bad).is_err());
        assert!(basis_pursuit(&f, &DVector::zeros(3), &SolverOptions::default()).is_err());
    }
}
