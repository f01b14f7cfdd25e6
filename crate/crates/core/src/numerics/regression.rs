use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub u: f64,
    pub v: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(u: f64, v: f64, weight: f64) -> Self {
        WeightedPoint { u, v, weight }
    }
}

/// Weighted least-squares fit `v ~ c0 + c1 u + c2 u^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `(X^T W X)^{-1}` in the `(1, u, u^2)` basis. With weights equal to
    /// inverse variances this is the coefficient covariance.
    pub normal_inverse: [[f64; 3]; 3],
}

impl QuadraticFit {
    pub fn eval(&self, u: f64) -> f64 {
        self.c0 + u * (self.c1 + u * self.c2)
    }
}

/// Weighted quadratic regression through normal equations.
///
/// The abscissae are centered and scaled to `[-1, 1]` and the design columns
/// normalized before forming the 3x3 system, followed by two rounds of
/// iterative refinement. Coefficients are mapped back to the raw `u` basis.
pub fn polyfit_quadratic(points: &[WeightedPoint]) -> Result<QuadraticFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", points.len())));
    }
    for p in points {
        if !(p.weight > 0.0 && p.weight.is_finite()) || !p.u.is_finite() || !p.v.is_finite() {
            return Err(Error::param(format!("bad regression point {p:?}")));
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.u).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct abscissae, got {}",
            distinct.len()
        )));
    }

    let total_w: f64 = points.iter().map(|p| p.weight).sum();
    let center = points.iter().map(|p| p.weight * p.u).sum::<f64>() / total_w;
    let spread = points.iter().map(|p| (p.u - center).abs()).fold(0.0, f64::max);

    let row = |u: f64| {
        let t = (u - center) / spread;
        Vector3::new(1.0, t, t * t)
    };
    let mut col_norm = Vector3::zeros();
    for p in points {
        col_norm += row(p.u).map(|x| p.weight * x * x);
    }
    let scale = col_norm.map(|x| 1.0 / x.sqrt());

    let mut normal = Matrix3::zeros();
    for p in points {
        let x = row(p.u).component_mul(&scale);
        normal += p.weight * x * x.transpose();
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Degenerate("normal equations are singular".into()))?;

    // d are coefficients in the scaled (1, t, t^2) basis.
    let mut d = Vector3::zeros();
    for _ in 0..3 {
        let mut rhs = Vector3::zeros();
        for p in points {
            let x = row(p.u);
            let resid = p.v - x.dot(&d);
            rhs += p.weight * resid * x.component_mul(&scale);
        }
        d += chol.solve(&rhs).component_mul(&scale);
    }

    let (m, s) = (center, spread);
    let to_raw = Matrix3::new(
        1.0, -m / s, m * m / (s * s),
        0.0, 1.0 / s, -2.0 * m / (s * s),
        0.0, 0.0, 1.0 / (s * s),
    );
    let c = to_raw * d;
    let scale_diag = Matrix3::from_diagonal(&scale);
    let cov_t = scale_diag * chol.inverse() * scale_diag;
    let cov = to_raw * cov_t * to_raw.transpose();
    let mut normal_inverse = [[0.0; 3]; 3];
    for (i, row) in normal_inverse.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(QuadraticFit { c0: c[0], c1: c[1], c2: c[2], normal_inverse })
}
