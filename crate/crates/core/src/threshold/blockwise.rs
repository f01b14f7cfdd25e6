//! Threshold of the blockwise-correlated ensemble `F = Xi sqrt(Rt)`, where
//! `Rt` is block diagonal with 2x2 blocks `[[1, r], [r, 1]]`.
//!
//! The fixed point is
//!
//! ```text
//! alpha = 1/(2 sqrt(chi)) * int Dz1 Dz2 V(z1, z2, chi)
//! chi   = 1/(2 alpha)     * int Dz1 Dz2 W(z1, z2, chi)
//! ```
//!
//! where `V` and `W` average, over the four zero/nonzero patterns of a pair
//! and the four sign patterns, the closed-form pair minimizers returned by
//! [`x_pair`]. Those closed forms are `(1 - r^2)` times the minimizer of
//! `x^T Rt_B x / 2 - (sqrt(chi) z)^T sqrt(Rt_B) x + |x|_1` (with the nonzero
//! components pinned to their sign), so `V` carries `1/(4(1-r^2))` and `W`,
//! which is quadratic in them, carries `1/(4(1-r^2)^2)`.

use rayon::prelude::*;

use super::{ThresholdPoint, LOG_CHI_BRACKET};
use crate::error::{Error, Result};
use crate::numerics::{find_root_with, gauss_mass, gauss_pdf, integrate_split, QuadratureRule, RootOptions};

/// Largest `|r|` accepted by the threshold solvers.
pub const MAX_ABS_R: f64 = 0.99;

/// Default absolute/relative tolerance of the piecewise integrator.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Beyond this `|z|` the Gaussian weight is below 1e-31 and is ignored.
const Z_CUTOFF: f64 = 12.0;

/// Coefficients of one 2x2 correlation block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCorrelation {
    pub r: f64,
    /// `(sqrt(1+r) + sqrt(1-r)) / 2`
    pub l_plus: f64,
    /// `(sqrt(1+r) - sqrt(1-r)) / 2`
    pub l_minus: f64,
    /// `l_plus - r l_minus`
    pub l_hat_plus: f64,
    /// `l_minus - r l_plus`
    pub l_hat_minus: f64,
}

/// The block `Rt_B` and its symmetric square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatrices {
    pub rt_block: [[f64; 2]; 2],
    pub sqrt_rt_block: [[f64; 2]; 2],
}

impl BlockCorrelation {
    pub fn new(r: f64) -> Result<Self> {
        if !(r.abs() < 1.0) {
            return Err(Error::param(format!("block correlation must satisfy |r| < 1, got {r}")));
        }
        let (p, m) = ((1.0 + r).sqrt(), (1.0 - r).sqrt());
        let l_plus = 0.5 * (p + m);
        let l_minus = 0.5 * (p - m);
        Ok(BlockCorrelation {
            r,
            l_plus,
            l_minus,
            l_hat_plus: l_plus - r * l_minus,
            l_hat_minus: l_minus - r * l_plus,
        })
    }

    pub fn matrices(&self) -> BlockMatrices {
        BlockMatrices {
            rt_block: [[1.0, self.r], [self.r, 1.0]],
            sqrt_rt_block: [[self.l_plus, self.l_minus], [self.l_minus, self.l_plus]],
        }
    }

    /// The same block with `l_+ <-> l_-` and `l^_+ <-> l^_-` exchanged.
    fn swapped(&self) -> Self {
        BlockCorrelation {
            l_plus: self.l_minus,
            l_minus: self.l_plus,
            l_hat_plus: self.l_hat_minus,
            l_hat_minus: self.l_hat_plus,
            ..*self
        }
    }
}

pub fn block_correlation(r: f64) -> Result<BlockCorrelation> {
    BlockCorrelation::new(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `Omega_eta(x) = x * Theta(eta x)`: the part of `x` on the `eta` side of zero.
pub fn omega(eta: Sign, x: f64) -> f64 {
    if eta.value() * x > 0.0 {
        x
    } else {
        0.0
    }
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Soft threshold at 1: `Omega_+(x - 1) + Omega_-(x + 1)`.
fn soft(x: f64) -> f64 {
    omega(Sign::Plus, x - 1.0) + omega(Sign::Minus, x + 1.0)
}

/// Which entries of an input pair are nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Support {
    pub first: bool,
    pub second: bool,
}

impl Support {
    pub const ALL: [Support; 4] = [
        Support { first: false, second: false },
        Support { first: false, second: true },
        Support { first: true, second: false },
        Support { first: true, second: true },
    ];

    fn weight(self, rho: f64) -> f64 {
        let w = |nonzero: bool| if nonzero { rho } else { 1.0 - rho };
        w(self.first) * w(self.second)
    }
}

/// Rotated fields `s(l^_+ z1 + l^_- z2)` and `s(l_+ z1 + l_- z2)` of the
/// first component; the second component's are obtained with `z1 <-> z2`.
fn hat_field(bc: &BlockCorrelation, z1: f64, z2: f64, s: f64) -> f64 {
    (bc.l_hat_plus * z1 + bc.l_hat_minus * z2) * s
}

fn plain_field(bc: &BlockCorrelation, z1: f64, z2: f64, s: f64) -> f64 {
    (bc.l_plus * z1 + bc.l_minus * z2) * s
}

/// First component of the both-zero pair.
fn x00_first(bc: &BlockCorrelation, z1: f64, z2: f64, s: f64) -> f64 {
    let r = bc.r;
    let own = hat_field(bc, z1, z2, s);
    let partner = (bc.l_hat_minus * z1 + bc.l_hat_plus * z2) * s;
    let mut total = 0.0;
    for eta1 in Sign::BOTH {
        for eta2 in Sign::BOTH {
            let (e1, e2) = (eta1.value(), eta2.value());
            total += omega(eta1, own + r * e2 - e1) * step(e2 * (partner + r * e1 - e2));
        }
    }
    let plain = plain_field(bc, z1, z2, s);
    for eta in Sign::BOTH {
        let e = eta.value();
        total += (1.0 - r * r)
            * omega(eta, plain - e)
            * step(partner + r * e + 1.0)
            * step(-(partner + r * e - 1.0));
    }
    total
}

/// Closed-form pair `(x^(1), x^(2))` for the zero/nonzero pattern `xi`.
///
/// `s = sqrt(chi_hat)`. Signs that a pattern does not use are accepted and
/// ignored. In the one-zero patterns the partner sign is the sign of the
/// nonzero entry: `sigma2` for `(0, 1)` and `sigma1` for `(1, 0)`.
pub fn x_pair(xi: Support, sigma: (Sign, Sign), z: (f64, f64), s: f64, bc: &BlockCorrelation) -> (f64, f64) {
    let (z1, z2) = z;
    let r = bc.r;
    let (s1, s2) = (sigma.0.value(), sigma.1.value());
    match (xi.first, xi.second) {
        (false, false) => (x00_first(bc, z1, z2, s), x00_first(&bc.swapped(), z1, z2, s)),
        (false, true) => {
            let first = soft(hat_field(bc, z1, z2, s) + r * s2);
            let second = -r * first + (1.0 - r * r) * ((bc.l_minus * z1 + bc.l_plus * z2) * s - s2);
            (first, second)
        }
        (true, false) => {
            let second = soft((bc.l_hat_minus * z1 + bc.l_hat_plus * z2) * s + r * s1);
            let first = -r * second + (1.0 - r * r) * (plain_field(bc, z1, z2, s) - s1);
            (first, second)
        }
        (true, true) => (
            hat_field(bc, z1, z2, s) - s1 + r * s2,
            (bc.l_hat_minus * z1 + bc.l_hat_plus * z2) * s - s2 + r * s1,
        ),
    }
}

/// `(V, W)` at one point, sharing the pair evaluations.
fn vw(z1: f64, z2: f64, s: f64, rho: f64, bc: &BlockCorrelation) -> (f64, f64) {
    let r = bc.r;
    let one_minus = 1.0 - r * r;
    let v_pref = 0.25 / one_minus;
    let w_pref = 0.25 / (one_minus * one_minus);
    let (mut v, mut w) = (0.0, 0.0);
    for xi in Support::ALL {
        let weight = xi.weight(rho);
        if weight == 0.0 {
            continue;
        }
        let mut v_xi = 0.0;
        let mut w_xi = 0.0;
        for s1 in Sign::BOTH {
            for s2 in Sign::BOTH {
                let (x1, x2) = x_pair(xi, (s1, s2), (z1, z2), s, bc);
                v_xi += z1 * (bc.l_plus * x1 + bc.l_minus * x2) + z2 * (bc.l_minus * x1 + bc.l_plus * x2);
                w_xi += x1 * x1 + 2.0 * r * x1 * x2 + x2 * x2;
            }
        }
        v += weight * v_xi;
        w += weight * w_xi;
    }
    (v_pref * v, w_pref * w)
}

/// `V(z1, z2, chi_hat)`: sum over patterns and signs of
/// `(sqrt(Rt_B))_ij z_i x^(j) / (4(1 - r^2))`.
pub fn v_integrand(z1: f64, z2: f64, chi_hat: f64, rho: f64, bc: &BlockCorrelation) -> f64 {
    vw(z1, z2, chi_hat.sqrt(), rho, bc).0
}

/// `W(z1, z2, chi_hat)`: sum over patterns and signs of
/// `x^(i) (Rt_B)_ij x^(j) / (4(1 - r^2)^2)`.
pub fn w_integrand(z1: f64, z2: f64, chi_hat: f64, rho: f64, bc: &BlockCorrelation) -> f64 {
    vw(z1, z2, chi_hat.sqrt(), rho, bc).1
}

/// How the double Gaussian integrals are evaluated.
#[derive(Debug, Clone)]
pub enum Integration {
    /// Tensor product of a Gauss-Hermite rule. Cheap, but the integrands
    /// have kinks, so accuracy stalls around 1e-4.
    TensorHermite(QuadratureRule),
    /// Exact in `z1` on each linear piece, adaptive Gauss-Kronrod in `z2`
    /// split at every point where the piece structure changes.
    Piecewise { tol: f64 },
}

impl Default for Integration {
    fn default() -> Self {
        Integration::Piecewise { tol: DEFAULT_TOLERANCE }
    }
}

/// A kink line `p1 z1 + p2 z2 = c`.
#[derive(Debug, Clone, Copy)]
struct KinkLine {
    p1: f64,
    p2: f64,
    c: f64,
}

/// Every line across which some `Omega` or `Theta` argument changes sign.
/// Between them all pair components are affine in `(z1, z2)`, hence `V` and
/// `W` are quadratic.
fn kink_lines(bc: &BlockCorrelation, s: f64) -> Vec<KinkLine> {
    let r = bc.r;
    let mut lines = Vec::with_capacity(12);
    for c in [1.0 + r, 1.0 - r, -1.0 + r, -1.0 - r] {
        lines.push(KinkLine { p1: bc.l_hat_plus, p2: bc.l_hat_minus, c: c / s });
        lines.push(KinkLine { p1: bc.l_hat_minus, p2: bc.l_hat_plus, c: c / s });
    }
    for c in [1.0, -1.0] {
        lines.push(KinkLine { p1: bc.l_plus, p2: bc.l_minus, c: c / s });
        lines.push(KinkLine { p1: bc.l_minus, p2: bc.l_plus, c: c / s });
    }
    lines
}

fn sorted_unique(mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1.0));
    points
}

/// `int f(z1) phi(z1) dz1` for `f` quadratic on each segment between
/// `breaks`. On each segment `f` is recovered from three samples and
/// integrated against the Gaussian in closed form.
fn exact_piecewise_quadratic<F: FnMut(f64) -> (f64, f64)>(breaks: &[f64], mut f: F) -> (f64, f64) {
    let mut total = (0.0, 0.0);
    let segments = breaks.len() + 1;
    for k in 0..segments {
        let a = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
        let b = if k == breaks.len() { f64::INFINITY } else { breaks[k] };
        let nodes = match (a.is_finite(), b.is_finite()) {
            (false, false) => [-1.0, 0.0, 1.0],
            (false, true) => [b - 3.0, b - 2.0, b - 1.0],
            (true, false) => [a + 1.0, a + 2.0, a + 3.0],
            (true, true) => {
                let h = b - a;
                [a + 0.25 * h, a + 0.5 * h, a + 0.75 * h]
            }
        };
        // Newton form around the middle node, then shift to moments about it.
        let c = nodes[1];
        let (fa, fb, fc) = (f(nodes[0]), f(nodes[1]), f(nodes[2]));
        let (ha, hc) = (nodes[0] - c, nodes[2] - c);
        // Quadratic q(t) = q0 + q1 t + q2 t^2 with t = z - c through the samples.
        let solve = |ya: f64, yb: f64, yc: f64| {
            let q0 = yb;
            let da = (ya - yb) / ha;
            let dc = (yc - yb) / hc;
            let q2 = (dc - da) / (hc - ha);
            let q1 = da - q2 * ha;
            (q0, q1, q2)
        };
        // Central moments int_a^b t^k phi(z) dz, t = z - c.
        let m0 = gauss_mass(a, b);
        let (pa, pb) = (
            if a.is_finite() { gauss_pdf(a) } else { 0.0 },
            if b.is_finite() { gauss_pdf(b) } else { 0.0 },
        );
        let (apa, bpb) = (if a.is_finite() { a * pa } else { 0.0 }, if b.is_finite() { b * pb } else { 0.0 });
        let m1 = pa - pb;
        let m2 = m0 + apa - bpb;
        let t1 = m1 - c * m0;
        let t2 = m2 - 2.0 * c * m1 + c * c * m0;
        let (v0, v1, v2) = solve(fa.0, fb.0, fc.0);
        let (w0, w1, w2) = solve(fa.1, fb.1, fc.1);
        total.0 += v0 * m0 + v1 * t1 + v2 * t2;
        total.1 += w0 * m0 + w1 * t1 + w2 * t2;
    }
    total
}

fn piecewise_integrals(s: f64, rho: f64, bc: &BlockCorrelation, tol: f64) -> (f64, f64) {
    let lines = kink_lines(bc, s);

    // z1 kinks for fixed z2, for the lines that are not parallel to the z1 axis.
    let inner = |z2: f64| -> (f64, f64) {
        let breaks: Vec<f64> = lines
            .iter()
            .filter(|l| l.p1 != 0.0)
            .map(|l| (l.c - l.p2 * z2) / l.p1)
            .filter(|z1| z1.abs() < Z_CUTOFF)
            .collect();
        let breaks = sorted_unique(breaks);
        exact_piecewise_quadratic(&breaks, |z1| vw(z1, z2, s, rho, bc))
    };

    // The inner integral is analytic in z2 except where two kink lines
    // cross or a kink line runs parallel to the z1 axis.
    let mut outer_breaks = vec![-Z_CUTOFF, Z_CUTOFF];
    for (i, a) in lines.iter().enumerate() {
        if a.p1 == 0.0 && a.p2 != 0.0 {
            outer_breaks.push(a.c / a.p2);
        }
        for b in &lines[i + 1..] {
            let det = a.p1 * b.p2 - b.p1 * a.p2;
            if det.abs() > 1e-14 {
                outer_breaks.push((a.p1 * b.c - b.p1 * a.c) / det);
            }
        }
    }
    let outer_breaks: Vec<f64> =
        sorted_unique(outer_breaks.into_iter().filter(|z| z.abs() <= Z_CUTOFF).collect());

    let v = integrate_split(|z2| inner(z2).0 * gauss_pdf(z2), &outer_breaks, tol, tol).value;
    let w = integrate_split(|z2| inner(z2).1 * gauss_pdf(z2), &outer_breaks, tol, tol).value;
    (v, w)
}

fn tensor_integrals(s: f64, rho: f64, bc: &BlockCorrelation, rule: &QuadratureRule) -> (f64, f64) {
    let mut total = (0.0, 0.0);
    for (&z1, &w1) in rule.nodes().iter().zip(rule.weights()) {
        for (&z2, &w2) in rule.nodes().iter().zip(rule.weights()) {
            let (v, w) = vw(z1, z2, s, rho, bc);
            total.0 += w1 * w2 * v;
            total.1 += w1 * w2 * w;
        }
    }
    total
}

fn check_rho(rho: f64, allow_one: bool) -> Result<()> {
    let ok = rho > 0.0 && (rho < 1.0 || (allow_one && rho == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::param(format!("rho must lie in (0, 1{}, got {rho}", if allow_one { "]" } else { ")" })))
    }
}

/// Right-hand sides `(alpha, chi_rhs)` of the fixed point at `chi_hat`.
pub fn blockwise_rhs_with(
    chi_hat: f64,
    rho: f64,
    bc: &BlockCorrelation,
    integration: &Integration,
) -> Result<(f64, f64)> {
    if !(chi_hat > 0.0 && chi_hat.is_finite()) {
        return Err(Error::param(format!("chi_hat must be positive and finite, got {chi_hat}")));
    }
    check_rho(rho, true)?;
    let s = chi_hat.sqrt();
    let (v, w) = match integration {
        Integration::TensorHermite(rule) => tensor_integrals(s, rho, bc, rule),
        Integration::Piecewise { tol } => piecewise_integrals(s, rho, bc, *tol),
    };
    let alpha = v / (2.0 * s);
    if !(alpha > 0.0) {
        return Err(Error::Internal(format!("non-positive alpha {alpha} at chi_hat = {chi_hat}")));
    }
    Ok((alpha, w / (2.0 * alpha)))
}

/// [`blockwise_rhs_with`] on a tensor Gauss-Hermite rule of order at least 40.
pub fn blockwise_rhs(chi_hat: f64, rho: f64, r: f64, quad: &QuadratureRule) -> Result<(f64, f64)> {
    if quad.order() < 40 {
        return Err(Error::param(format!("quadrature order must be at least 40, got {}", quad.order())));
    }
    let bc = BlockCorrelation::new(r)?;
    blockwise_rhs_with(chi_hat, rho, &bc, &Integration::TensorHermite(quad.clone()))
}

/// Threshold of the blockwise ensemble with the default (piecewise) integrator.
pub fn blockwise_threshold(rho: f64, r: f64) -> Result<ThresholdPoint> {
    blockwise_threshold_with(rho, r, &Integration::default())
}

pub fn blockwise_threshold_with(rho: f64, r: f64, integration: &Integration) -> Result<ThresholdPoint> {
    check_rho(rho, true)?;
    if !(r.abs() <= MAX_ABS_R) {
        return Err(Error::param(format!("|r| must not exceed {MAX_ABS_R}, got {r}")));
    }
    if rho == 1.0 {
        return Ok(ThresholdPoint::dense_boundary(rho, r));
    }
    let bc = BlockCorrelation::new(r)?;
    let opts = RootOptions { f_tol: 1e-13, x_tol: 1e-15, ..RootOptions::new(1e-13) };
    let log_chi = find_root_with(
        |u| {
            let chi = u.exp();
            match blockwise_rhs_with(chi, rho, &bc, integration) {
                Ok((_, rhs)) => 1.0 - rhs / chi,
                Err(_) => f64::NAN,
            }
        },
        LOG_CHI_BRACKET,
        opts,
    )?;
    let chi_hat = log_chi.exp();
    let (alpha, rhs) = blockwise_rhs_with(chi_hat, rho, &bc, integration)?;
    Ok(ThresholdPoint { rho, r, alpha, chi_hat: Some(chi_hat), residual: (chi_hat - rhs).abs() })
}

/// One cell of a threshold table.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub rho: f64,
    pub r: f64,
    pub outcome: Result<ThresholdPoint>,
}

/// Row-major table over `rho_grid x r_grid`. Cells fail independently.
pub fn threshold_surface(rho_grid: &[f64], r_grid: &[f64]) -> Vec<SurfaceCell> {
    let cells: Vec<(f64, f64)> = rho_grid.iter().flat_map(|&rho| r_grid.iter().map(move |&r| (rho, r))).collect();
    cells
        .into_par_iter()
        .map(|(rho, r)| SurfaceCell { rho, r, outcome: blockwise_threshold(rho, r) })
        .collect()
}
