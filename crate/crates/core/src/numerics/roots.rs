use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once `|f(x)| <= f_tol`.
    pub f_tol: f64,
    /// Stop once the bracket is narrower than `x_tol * max(1, |x|) + x_tol`.
    pub x_tol: f64,
    /// Each expansion widens the bracket tenfold about its center.
    pub max_expansions: usize,
    pub max_iterations: usize,
}

impl RootOptions {
    pub fn new(tol: f64) -> Self {
        RootOptions { f_tol: tol, x_tol: tol, max_expansions: 64, max_iterations: 500 }
    }
}

/// Root of `f` in `bracket`, with `tol` used both on `|f|` and on the width.
pub fn find_root<F: FnMut(f64) -> f64>(f: F, bracket: (f64, f64), tol: f64) -> Result<f64> {
    find_root_with(f, bracket, RootOptions::new(tol))
}

/// Bisection with secant acceleration.
///
/// Each step tries the secant through the bracket ends and falls back to the
/// midpoint whenever the secant point leaves the bracket or the bracket did
/// not halve over the previous two steps. If the initial bracket does not
/// straddle a sign change it is widened geometrically first.
pub fn find_root_with<F: FnMut(f64) -> f64>(mut f: F, bracket: (f64, f64), opts: RootOptions) -> Result<f64> {
    let (mut a, mut b) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let mut fa = f(a);
    let mut fb = f(b);
    let mut expansions = 0;
    while !(fa * fb <= 0.0) {
        if expansions == opts.max_expansions || !fa.is_finite() || !fb.is_finite() {
            return Err(Error::NoRoot { lo: a, hi: b, f_lo: fa, f_hi: fb });
        }
        let center = 0.5 * (a + b);
        let half = 5.0 * (b - a).max(f64::MIN_POSITIVE);
        a = center - half;
        b = center + half;
        fa = f(a);
        fb = f(b);
        expansions += 1;
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }

    // Bracket widths at the top of the previous two iterations.
    let mut history = [f64::INFINITY, f64::INFINITY];
    for _ in 0..opts.max_iterations {
        let width = b - a;
        let best = if fa.abs() < fb.abs() { a } else { b };
        if width <= opts.x_tol * best.abs().max(1.0) + opts.x_tol {
            return Ok(best);
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let bisect = width > 0.5 * history[0];
        let x = if bisect || !(secant > a && secant < b) { 0.5 * (a + b) } else { secant };
        let fx = f(x);
        if fx == 0.0 || fx.abs() <= opts.f_tol {
            return Ok(x);
        }
        if fx.is_nan() {
            return Err(Error::Internal(format!("root finder evaluated NaN at x = {x}")));
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        history = [history[1], width];
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}
