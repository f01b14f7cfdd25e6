//! Random instances `y = F x0` with `F = Xi sqrt(Rt)`.
//!
//! `Xi` has i.i.d. `N(0, 1/N)` entries and is drawn row by row, so the first
//! `P` rows of an `N x N` instance are exactly the `P x N` instance from the
//! same stream. `Rt` is block diagonal with 2x2 blocks `[[1, r], [r, 1]]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::streams::{stream, Purpose};
use crate::threshold::BlockCorrelation;

/// Bernoulli-Gaussian signal: each entry is 0 with probability `1 - rho`,
/// otherwise standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub values: DVector<f64>,
    pub rho: f64,
}

impl SparseSignal {
    pub fn nonzeros(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

pub fn sample_sparse_signal<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Result<SparseSignal> {
    if n == 0 {
        return Err(Error::param("signal length must be positive"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::param(format!("rho must lie in [0, 1], got {rho}")));
    }
    let values = DVector::from_iterator(
        n,
        (0..n).map(|_| if rng.random::<f64>() < rho { rng.sample(StandardNormal) } else { 0.0 }),
    );
    Ok(SparseSignal { values, rho })
}

/// `sqrt(Rt)` for the blockwise model, applied pair by pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtRtBlockwise {
    n: usize,
    block: BlockCorrelation,
}

impl SqrtRtBlockwise {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> f64 {
        self.block.r
    }

    /// Applies the operator in place. It is symmetric, so this is also the
    /// right action on a row vector.
    pub fn apply_in_place(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.n, "operator dimension mismatch");
        if self.block.r == 0.0 {
            return;
        }
        let (lp, lm) = (self.block.l_plus, self.block.l_minus);
        for pair in v.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = lp * a + lm * b;
            pair[1] = lm * a + lp * b;
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.apply_in_place(out.as_mut_slice());
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n, self.n);
        for j in 0..self.n {
            let mut col: Vec<f64> = m.column(j).iter().copied().collect();
            self.apply_in_place(&mut col);
            m.set_column(j, &DVector::from_vec(col));
        }
        m
    }
}

pub fn build_sqrt_rt_blockwise(n: usize, r: f64) -> Result<SqrtRtBlockwise> {
    let block = BlockCorrelation::new(r)?;
    if r != 0.0 && !n.is_multiple_of(2) {
        return Err(Error::param(format!("N must be even for correlated pairs, got {n}")));
    }
    Ok(SqrtRtBlockwise { n, block })
}

/// `P x N` matrix `Xi sqrt(Rt)`. Row `i` uses only the `i`-th block of `N`
/// normal draws from `rng`.
pub fn sample_sensing_matrix<R: Rng + ?Sized>(p: usize, n: usize, r: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if p == 0 || p > n {
        return Err(Error::param(format!("need 1 <= P <= N, got P = {p}, N = {n}")));
    }
    let sqrt_rt = build_sqrt_rt_blockwise(n, r)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity(p * n);
    let mut row = vec![0.0; n];
    for _ in 0..p {
        for v in row.iter_mut() {
            *v = scale * rng.sample::<f64, _>(StandardNormal);
        }
        sqrt_rt.apply_in_place(&mut row);
        data.extend_from_slice(&row);
    }
    Ok(DMatrix::from_row_slice(p, n, &data))
}

/// Some `S` with `S^T S = A`, here `S = L^T` from the Cholesky factor.
pub fn matrix_sqrt_sym(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::param(format!("matrix must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::param("matrix must be symmetric"));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
    Ok(chol.l().transpose())
}

/// One sensing problem with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingInstance {
    pub f: DMatrix<f64>,
    pub x0: SparseSignal,
    /// `F x0`, computed once at construction.
    pub y: DVector<f64>,
    pub r: f64,
    pub seed: u64,
}

impl SensingInstance {
    /// Draws `x0` and `F` from independent streams keyed by `seed`.
    pub fn sample(p: usize, n: usize, rho: f64, r: f64, seed: u64) -> Result<Self> {
        let x0 = sample_sparse_signal(n, rho, &mut stream(seed, 0, Purpose::Signal))?;
        let f = sample_sensing_matrix(p, n, r, &mut stream(seed, 0, Purpose::Sensing))?;
        let y = &f * &x0.values;
        Ok(SensingInstance { f, x0, y, r, seed })
    }

    /// The first `p` rows of `F` and `y`.
    pub fn leading_rows(&self, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        (self.f.rows(0, p).into_owned(), self.y.rows(0, p).into_owned())
    }
}
