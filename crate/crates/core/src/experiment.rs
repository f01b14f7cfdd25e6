//! Row-deletion experiment.
//!
//! A trial draws a square instance `y = F x0` and solves basis pursuit on
//! the first `P` rows for `P = N, N-1, ...`, always dropping the last row.
//! At the first `P` where recovery fails it records `Pc = P + 1`; if every
//! `P` down to 1 succeeds, `Pc = 1`. The campaign averages `Pc/N` per size
//! and extrapolates to `N -> inf` with a quadratic in `1/N`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::l1::{basis_pursuit_from, check_recovery_with, RecoveryNorm, SolverOptions, DEFAULT_RECOVERY_TOLERANCE};
use crate::numerics::{polyfit_quadratic, WeightedPoint};
use crate::output::{format_significant, write_header};
use crate::sensing::SensingInstance;
use crate::streams::trial_seed;

/// Largest share of trials allowed to contain an unconverged solve.
pub const MAX_UNCONVERGED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    pub solver: SolverOptions,
    /// Distance to `x0` above which a solve counts as a failure.
    pub recovery_tolerance: f64,
    pub norm: RecoveryNorm,
    /// Start each solve from the previous solution.
    pub warm_start: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            solver: SolverOptions::default(),
            recovery_tolerance: DEFAULT_RECOVERY_TOLERANCE,
            norm: RecoveryNorm::L2,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub rho: f64,
    pub r: f64,
    pub trial_index: usize,
    pub seed: u64,
    pub pc: usize,
    /// False if any solve of the trial hit the iteration cap or failed to
    /// factorize.
    pub converged_all: bool,
    /// Number of basis-pursuit solves performed.
    pub solves: usize,
}

impl TrialRecord {
    pub fn alpha_c(&self) -> f64 {
        self.pc as f64 / self.n as f64
    }
}

fn validate(n: usize, rho: f64, r: f64, opts: &TrialOptions) -> Result<()> {
    if n < 4 {
        return Err(Error::param(format!("N must be at least 4, got {n}")));
    }
    if r != 0.0 && !n.is_multiple_of(2) {
        return Err(Error::param(format!("N must be even for correlated pairs, got {n}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::param(format!("rho must lie in [0, 1], got {rho}")));
    }
    if !(r.abs() < 1.0) {
        return Err(Error::param(format!("|r| must be below 1, got {r}")));
    }
    if !(opts.recovery_tolerance > 0.0) {
        return Err(Error::param("recovery tolerance must be positive"));
    }
    opts.solver.validate()
}

/// One trial of the protocol. The returned record has `trial_index = 0`.
pub fn run_trial(n: usize, rho: f64, r: f64, seed: u64, opts: &TrialOptions) -> Result<TrialRecord> {
    validate(n, rho, r, opts)?;
    let inst = SensingInstance::sample(n, n, rho, r, seed)?;
    let mut warm = None;
    let mut converged_all = true;
    let mut pc = 1;
    let mut solves = 0;
    for p in (1..=n).rev() {
        let (f, y) = inst.leading_rows(p);
        solves += 1;
        let outcome = basis_pursuit_from(&f, &y, &opts.solver, warm.as_ref());
        let success = match outcome {
            Ok(res) => {
                converged_all &= res.converged;
                let ok = check_recovery_with(&res.x_star, &inst.x0.values, opts.recovery_tolerance, opts.norm)?;
                if opts.warm_start {
                    warm = Some(res.warm_start());
                }
                ok
            }
            Err(Error::Factorization(_)) => {
                converged_all = false;
                false
            }
            Err(e) => return Err(e),
        };
        if !success {
            pc = p + 1;
            break;
        }
    }
    Ok(TrialRecord { n, rho, r, trial_index: 0, seed, pc: pc.min(n), converged_all, solves })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeSummary {
    pub n: usize,
    pub trials: usize,
    /// Mean of `Pc/N`.
    pub mean_alpha: f64,
    /// Standard error of the mean (0 for a single trial).
    pub std_error: f64,
}

pub fn summarize(n: usize, records: &[TrialRecord]) -> SizeSummary {
    let alphas: Vec<f64> = records.iter().filter(|t| t.n == n).map(TrialRecord::alpha_c).collect();
    let count = alphas.len() as f64;
    let mean = alphas.iter().sum::<f64>() / count;
    let std_error = if alphas.len() > 1 {
        (alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (count - 1.0) / count).sqrt()
    } else {
        0.0
    };
    SizeSummary { n, trials: alphas.len(), mean_alpha: mean, std_error }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    /// Ordered by size (in the order given) and then by trial index.
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<SizeSummary>,
}

impl Campaign {
    pub fn unconverged(&self) -> usize {
        self.records.iter().filter(|t| !t.converged_all).count()
    }

    /// Fails if more than 1% of the trials had an unconverged solve.
    pub fn check(&self) -> Result<()> {
        let unconverged = self.unconverged();
        if unconverged as f64 > MAX_UNCONVERGED_FRACTION * self.records.len() as f64 {
            return Err(Error::Campaign { unconverged, trials: self.records.len() });
        }
        Ok(())
    }
}

/// Checks the arguments of [`collect_campaign`] without running anything.
pub fn validate_campaign(n_list: &[usize], trials: usize, rho: f64, r: f64, opts: &TrialOptions) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::param("need at least one size"));
    }
    if trials == 0 {
        return Err(Error::param("need at least one trial per size"));
    }
    n_list.iter().try_for_each(|&n| validate(n, rho, r, opts))
}

/// Runs all trials without judging convergence; see [`run_campaign`].
pub fn collect_campaign(
    n_list: &[usize],
    trials: usize,
    rho: f64,
    r: f64,
    master_seed: u64,
    opts: &TrialOptions,
) -> Result<Campaign> {
    validate_campaign(n_list, trials, rho, r, opts)?;
    let jobs: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let records = jobs
        .into_par_iter()
        .map(|(n, t)| {
            let seed = trial_seed(master_seed, n, t);
            run_trial(n, rho, r, seed, opts).map(|rec| TrialRecord { trial_index: t, ..rec })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = n_list.iter().map(|&n| summarize(n, &records)).collect();
    Ok(Campaign { records, summaries })
}

/// Trials for every size in `n_list`, with per-trial seeds derived from
/// `(master_seed, N, trial index)`. Results do not depend on scheduling.
pub fn run_campaign(
    n_list: &[usize],
    trials: usize,
    rho: f64,
    r: f64,
    master_seed: u64,
    opts: &TrialOptions,
) -> Result<Campaign> {
    let campaign = collect_campaign(n_list, trials, rho, r, master_seed, opts)?;
    campaign.check()?;
    Ok(campaign)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationFit {
    /// `mean_alpha ~ c0 + c1/N + c2/N^2`
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha_infinity: f64,
    pub c0_std_error: f64,
    /// False when some size had zero standard error and the fit fell back
    /// to unit weights.
    pub weighted: bool,
}

/// Quadratic fit in `1/N`, weighted by `1/std_error^2`.
///
/// If any size has a zero standard error the fit is unweighted and the
/// intercept error comes from the residual variance (NaN with exactly three
/// sizes).
pub fn extrapolate(summaries: &[SizeSummary]) -> Result<ExtrapolationFit> {
    let weighted = summaries.iter().all(|s| s.std_error > 0.0 && s.std_error.is_finite());
    let points: Vec<WeightedPoint> = summaries
        .iter()
        .map(|s| {
            let w = if weighted { s.std_error.powi(-2) } else { 1.0 };
            WeightedPoint::new(1.0 / s.n as f64, s.mean_alpha, w)
        })
        .collect();
    let fit = polyfit_quadratic(&points)?;
    let c0_std_error = if weighted {
        fit.normal_inverse[0][0].sqrt()
    } else if points.len() > 3 {
        let ssr: f64 = points.iter().map(|p| (p.v - fit.eval(p.u)).powi(2)).sum();
        (fit.normal_inverse[0][0] * ssr / (points.len() - 3) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ExtrapolationFit { c0: fit.c0, c1: fit.c1, c2: fit.c2, alpha_infinity: fit.c0, c0_std_error, weighted })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::param(format!("cannot write {}: {e}", path.display())))
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Internal(format!("writing {}: {e}", path.display()))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Internal(format!("writing {}: {e}", path.display()))
}

/// Raw trials: `N,rho,r,trial_index,seed,Pc,alpha_c,converged_all`.
pub fn write_raw_csv(path: &Path, header: &[(String, String)], records: &[TrialRecord]) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "rho", "r", "trial_index", "seed", "Pc", "alpha_c", "converged_all"])
        .map_err(csv_error(path))?;
    for t in records {
        w.write_record([
            t.n.to_string(),
            t.rho.to_string(),
            t.r.to_string(),
            t.trial_index.to_string(),
            t.seed.to_string(),
            t.pc.to_string(),
            format_significant(t.alpha_c(), 17),
            t.converged_all.to_string(),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// Per-size summary: `N,trials,mean_alpha,std_error`.
pub fn write_summary_csv(path: &Path, header: &[(String, String)], summaries: &[SizeSummary]) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "trials", "mean_alpha", "std_error"]).map_err(csv_error(path))?;
    for s in summaries {
        w.write_record([
            s.n.to_string(),
            s.trials.to_string(),
            format_significant(s.mean_alpha, 17),
            format_significant(s.std_error, 17),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// `key=value` report of an extrapolation.
pub fn write_fit_report(path: &Path, header: &[(String, String)], fit: &ExtrapolationFit) -> Result<()> {
    let mut out = create(path)?;
    write_header(&mut out, header).map_err(io_error(path))?;
    let lines = [
        ("c0", format_significant(fit.c0, 17)),
        ("c0_stderr", format_significant(fit.c0_std_error, 17)),
        ("c1", format_significant(fit.c1, 17)),
        ("c2", format_significant(fit.c2, 17)),
        ("weighted", fit.weighted.to_string()),
    ];
    for (key, value) in lines {
        writeln!(out, "{key}={value}").map_err(io_error(path))?;
    }
    out.flush().map_err(io_error(path))
}
