//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 invalid input, 3 no root found,
//! 4 campaign failure, 5 failed check.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiment::{
    collect_campaign, extrapolate, validate_campaign, write_fit_report, write_raw_csv, write_summary_csv, TrialOptions,
};
use crate::l1::{RecoveryNorm, DEFAULT_RECOVERY_TOLERANCE};
use crate::output::{format_significant, write_header};
use crate::rmt::{empirical_spectral_moments, g_closed_form, g_domain, g_transform, MpDensity, MAX_EMPIRICAL_N};
use crate::threshold::{blockwise_threshold, threshold_surface, universal_threshold, ThresholdPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_ROOT: i32 = 3;
pub const EXIT_CAMPAIGN: i32 = 4;
pub const EXIT_CHECK: i32 = 5;

/// Environment variable supplying the default master seed.
pub const SEED_ENV: &str = "L1PHASE_SEED";
const DEFAULT_SEED: u64 = 2024;
const DIGITS: usize = 12;
const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "l1-phase", version, about = "Thresholds and simulations of l1 recovery with blockwise-correlated sensing")]
struct Cli {
    /// Worker threads for parallel commands (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the threshold equations at one point.
    Threshold(ThresholdArgs),
    /// Tabulate the blockwise threshold over a (rho, r) grid.
    Surface(SurfaceArgs),
    /// Run the row-deletion Monte Carlo and extrapolate to N -> infinity.
    Experiment(ExperimentArgs),
    /// Verify the spectral routines against closed forms and sampling.
    RmtCheck(RmtArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Universal,
    Blockwise,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    kind: Kind,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    /// Also write the result as a one-row CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SurfaceArgs {
    /// `start:stop:step` or a single value.
    #[arg(long)]
    rho: String,
    /// `start:stop:step` or a single value.
    #[arg(long, allow_hyphen_values = true)]
    r: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    #[arg(long, value_delimiter = ',', default_value = "32,48,64")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Recovery tolerance on the distance between solution and signal.
    #[arg(long, default_value_t = DEFAULT_RECOVERY_TOLERANCE)]
    tol: f64,
    /// Norm of the recovery check: l2 or linf.
    #[arg(long, default_value = "l2")]
    norm: RecoveryNorm,
}

#[derive(Debug, Args)]
struct RmtArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Domain(_) | Error::Degenerate(_) => EXIT_INPUT,
        Error::NoRoot { .. } => EXIT_NO_ROOT,
        Error::Campaign { .. } => EXIT_CAMPAIGN,
        Error::AtRho { source, .. } => exit_code(source),
        Error::Factorization(_) | Error::Internal(_) => EXIT_INTERNAL,
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("warning: thread pool already configured: {e}");
    }
    let outcome = match &cli.command {
        Command::Threshold(a) => cmd_threshold(a),
        Command::Surface(a) => cmd_surface(a, cli.threads),
        Command::Experiment(a) => cmd_experiment(a, cli.threads),
        Command::RmtCheck(a) => cmd_rmt_check(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn fmt(x: f64) -> String {
    format_significant(x, DIGITS)
}

fn point_fields(p: &ThresholdPoint) -> [String; 4] {
    [fmt(p.rho), fmt(p.r), fmt(p.alpha), p.chi_hat.map(fmt).unwrap_or_default()]
}

fn header(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    let mut out = vec![("version".to_string(), env!("CARGO_PKG_VERSION").to_string())];
    out.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())));
    out
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Internal(format!("writing {}: {e}", path.display()))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::param(format!("cannot write {}: {e}", path.display())))
}

fn cmd_threshold(a: &ThresholdArgs) -> Result<i32> {
    let point = match a.kind {
        Kind::Universal => {
            if a.r != 0.0 {
                return Err(Error::param("the universal threshold takes no correlation; drop --r"));
            }
            universal_threshold(a.rho)?
        }
        Kind::Blockwise => blockwise_threshold(a.rho, a.r)?,
    };
    let fields = point_fields(&point);
    println!("{}", fields.join(","));
    if let Some(path) = &a.csv {
        let kind = match a.kind {
            Kind::Universal => "universal",
            Kind::Blockwise => "blockwise",
        };
        let mut file = create_file(path)?;
        let meta = header(&[("command", "threshold".into()), ("kind", kind.into()), ("rho", a.rho.to_string()), ("r", a.r.to_string())]);
        write_header(&mut file, &meta).map_err(|e| Error::Internal(e.to_string()))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["rho", "r", "alpha", "chi_hat"]).map_err(csv_error(path))?;
        w.write_record(&fields).map_err(csv_error(path))?;
        w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(EXIT_OK)
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a single
/// number.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::param(format!("malformed grid '{text}': expected start:stop:step or a number"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    match parts[..] {
        [x] => Ok(vec![x]),
        [start, stop, step] => {
            if !(step > 0.0) || stop < start {
                return Err(Error::param(format!("grid '{text}' needs step > 0 and stop >= start")));
            }
            let span = (stop - start) / step;
            if span >= MAX_GRID_POINTS as f64 {
                return Err(Error::param(format!("grid '{text}' has too many points")));
            }
            let count = (span + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn cmd_surface(a: &SurfaceArgs, threads: usize) -> Result<i32> {
    let rho_grid = parse_grid(&a.rho)?;
    let r_grid = parse_grid(&a.r)?;
    let mut file = create_file(&a.out)?;
    let meta = header(&[
        ("command", "surface".into()),
        ("rho", a.rho.clone()),
        ("r", a.r.clone()),
        ("threads", threads.to_string()),
    ]);
    write_header(&mut file, &meta).map_err(|e| Error::Internal(e.to_string()))?;
    let cells = threshold_surface(&rho_grid, &r_grid);
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["rho", "r", "alpha", "chi_hat", "status"]).map_err(csv_error(&a.out))?;
    let mut failed = 0;
    for cell in &cells {
        let record = match &cell.outcome {
            Ok(p) => {
                let [rho, r, alpha, chi] = point_fields(p);
                [rho, r, alpha, chi, "ok".into()]
            }
            Err(e) => {
                failed += 1;
                [fmt(cell.rho), fmt(cell.r), String::new(), String::new(), e.to_string()]
            }
        };
        w.write_record(&record).map_err(csv_error(&a.out))?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    println!("wrote {} cells ({} failed) to {}", cells.len(), failed, a.out.display());
    Ok(EXIT_OK)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::param(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    create_file(&probe)?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, threads: usize) -> Result<i32> {
    let opts = TrialOptions { recovery_tolerance: a.tol, norm: a.norm, ..TrialOptions::default() };
    validate_campaign(&a.n_list, a.trials, a.rho, a.r, &opts)?;
    prepare_dir(&a.out_dir)?;
    let n_list: Vec<String> = a.n_list.iter().map(|n| n.to_string()).collect();
    let meta = header(&[
        ("command", "experiment".into()),
        ("rho", a.rho.to_string()),
        ("r", a.r.to_string()),
        ("n_list", n_list.join(";")),
        ("trials", a.trials.to_string()),
        ("seed", a.seed.to_string()),
        ("tol", a.tol.to_string()),
        ("norm", a.norm.to_string()),
        ("threads", threads.to_string()),
    ]);
    let campaign = collect_campaign(&a.n_list, a.trials, a.rho, a.r, a.seed, &opts)?;
    write_raw_csv(&a.out_dir.join("raw.csv"), &meta, &campaign.records)?;
    write_summary_csv(&a.out_dir.join("summary.csv"), &meta, &campaign.summaries)?;
    for s in &campaign.summaries {
        println!("N={} trials={} mean_alpha={} std_error={}", s.n, s.trials, fmt(s.mean_alpha), fmt(s.std_error));
    }
    match extrapolate(&campaign.summaries) {
        Ok(fit) => {
            write_fit_report(&a.out_dir.join("fit.txt"), &meta, &fit)?;
            println!("alpha_infinity={} stderr={}", fmt(fit.alpha_infinity), fmt(fit.c0_std_error));
        }
        Err(e) => eprintln!("no extrapolation: {e}"),
    }
    match blockwise_threshold(a.rho, a.r) {
        Ok(p) => println!("analytic_alpha={}", fmt(p.alpha)),
        Err(e) => println!("analytic_alpha=unavailable ({e})"),
    }
    campaign.check()?;
    Ok(EXIT_OK)
}

struct Check {
    name: String,
    error: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn cmd_rmt_check(a: &RmtArgs) -> Result<i32> {
    let mp = MpDensity::new(a.alpha)?;
    if a.n == 0 || a.n > MAX_EMPIRICAL_N {
        return Err(Error::param(format!("--n must lie in 1..={MAX_EMPIRICAL_N}")));
    }
    if a.samples == 0 {
        return Err(Error::param("--samples must be positive"));
    }
    let p = ((a.alpha * a.n as f64).round() as usize).max(1);
    let mut checks = vec![
        Check { name: "normalization".into(), error: (mp.moment(0)? - 1.0).abs(), tolerance: 1e-8 },
        Check { name: "first_moment".into(), error: (mp.moment(1)? - a.alpha).abs(), tolerance: 1e-6 },
    ];

    let (lo, hi) = g_domain(a.alpha);
    let steps = 30;
    let mut g_error: f64 = 0.0;
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        g_error = g_error.max((g_transform(a.alpha, x)? - g_closed_form(a.alpha, x)).abs());
    }
    checks.push(Check { name: format!("g_transform[{},{}]", fmt(lo), fmt(hi)), error: g_error, tolerance: 1e-6 });

    // Compare against the spectrum at the realized ratio P/N.
    let realized = MpDensity::new(p as f64 / a.n as f64)?;
    let empirical = empirical_spectral_moments(p, a.n, 3, a.samples, a.seed)?;
    for (k, &value) in empirical.means.iter().enumerate() {
        let exact = realized.moment(k + 1)?;
        checks.push(Check {
            name: format!("empirical_moment_{}", k + 1),
            error: ((value - exact) / exact).abs(),
            tolerance: 0.03,
        });
    }

    let mut failures = 0;
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        failures += usize::from(!c.passed());
        println!("{}: {verdict} (error={:.3e}, tol={:.0e})", c.name, c.error, c.tolerance);
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_CHECK })
}
