use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l1-phase"))
        .args(args)
        .env_remove("L1PHASE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn threshold_blockwise_prints_twelve_digits() {
    let out = run(&["threshold", "blockwise", "--rho", "0.5", "--r", "0.9"]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    let fields: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[2], "0.836492992241");
    assert!((fields[2].parse::<f64>().unwrap() - 0.83649).abs() < 5e-4);
}

#[test]
fn universal_equals_uncorrelated_blockwise() {
    let a = run(&["threshold", "universal", "--rho", "0.5"]);
    let b = run(&["threshold", "blockwise", "--rho", "0.5", "--r", "0"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn threshold_domain_errors() {
    assert_eq!(run(&["threshold", "blockwise", "--rho", "0.5", "--r", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["threshold", "universal", "--rho", "0"]).status.code(), Some(2));
    assert_eq!(run(&["threshold", "universal", "--rho", "0.5", "--r", "0.3"]).status.code(), Some(2));
    assert_eq!(run(&["threshold"]).status.code(), Some(2));
}

#[test]
fn threshold_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = run(&["threshold", "blockwise", "--rho", "0.3", "--r", "-0.6", "--csv", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("# kind=blockwise\n"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "rho,r,alpha,chi_hat");
    assert_eq!(data[1], stdout(&out).trim());
}

#[test]
fn surface_single_cell_matches_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let out = run(&["surface", "--rho", "0.4", "--r", "0.5", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("# rho=0.4\n") && !text.contains('\r'));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "rho,r,alpha,chi_hat,status");
    let single = run(&["threshold", "blockwise", "--rho", "0.4", "--r", "0.5"]);
    assert_eq!(rows[1], format!("{},ok", stdout(&single).trim()));
}

#[test]
fn surface_row_deviation_grows_and_bad_cells_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let out = run(&["surface", "--rho", "0.5", "--r", "0:0.6:0.2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let alphas: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(alphas.len(), 4);
    let dev: Vec<f64> = alphas.iter().map(|a| (a - alphas[0]).abs()).collect();
    assert!(dev.windows(2).all(|w| w[1] >= w[0]));

    let out = run(&["surface", "--rho", "0.5", "--r", "0.95:1.0:0.05", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("0.500000000000,1.00000000000,,,"), "{last}");
}

#[test]
fn surface_rejects_malformed_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    assert_eq!(run(&["surface", "--rho", "0.1:0.5", "--r", "0", "--out", path.to_str().unwrap()]).status.code(), Some(2));
    assert!(!path.exists());
}

#[test]
fn experiment_smoke_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nested").join("run");
    let out = run(&[
        "experiment", "--rho", "0.3", "--r", "0.5", "--n-list", "8,12,16", "--trials", "1", "--seed", "7",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = fs::read_to_string(out_dir.join("raw.csv")).unwrap();
    assert!(raw.contains("# seed=7\n"));
    assert!(raw.contains("N,rho,r,trial_index,seed,Pc,alpha_c,converged_all\n"));
    assert_eq!(raw.lines().filter(|l| !l.starts_with('#')).count(), 4);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("N,trials,mean_alpha,std_error\n"));
    let fit = fs::read_to_string(out_dir.join("fit.txt")).unwrap();
    for key in ["c0=", "c0_stderr=", "c1=", "c2="] {
        assert!(fit.lines().any(|l| l.starts_with(key)), "{key}");
    }
    let printed = stdout(&out);
    assert!(printed.contains("alpha_infinity=") && printed.contains("analytic_alpha="));
}

#[test]
fn experiment_is_reproducible_from_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let go = |sub: &str, seed_flag: Option<&str>| {
        let path = dir.path().join(sub);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_l1-phase"));
        cmd.args(["experiment", "--rho", "0.4", "--n-list", "8,10,12", "--trials", "3", "--out-dir", path.to_str().unwrap()]);
        cmd.env("L1PHASE_SEED", "99");
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read_to_string(path.join("raw.csv")).unwrap()
    };
    let from_env = go("a", None);
    assert!(from_env.contains("# seed=99\n"));
    assert_eq!(from_env, go("b", Some("99")));
    assert_ne!(from_env, go("c", Some("100")));
}

#[test]
fn experiment_rejects_unwritable_directory_and_bad_sizes() {
    // Tests may run as root, so use a path below a regular file.
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let blocked = file.join("out");
    let out = run(&["experiment", "--rho", "0.3", "--n-list", "8,10,12", "--trials", "1", "--out-dir", blocked.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let ok_dir = dir.path().join("odd");
    let out = run(&["experiment", "--rho", "0.3", "--r", "0.5", "--n-list", "9", "--trials", "1", "--out-dir", ok_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!ok_dir.exists(), "validation happens before touching the disk");
}

#[test]
fn rmt_check_outcomes() {
    let out = run(&["rmt-check"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.contains(": PASS")).count(), 6);
    assert_eq!(run(&["rmt-check", "--alpha", "1.0", "--n", "64"]).status.code(), Some(0));
    assert_eq!(run(&["rmt-check", "--alpha", "0"]).status.code(), Some(2));
    // Two tiny samples cannot reproduce the spectral moments to 3%.
    assert_eq!(run(&["rmt-check", "--n", "4", "--samples", "1"]).status.code(), Some(5));
}

#[test]
fn threads_flag_is_accepted() {
    let out = run(&["--threads", "1", "threshold", "universal", "--rho", "0.2"]);
    assert_eq!(out.status.code(), Some(0));
}
