//! Runs the compiled binary and checks exit codes and written files.

use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptive-ellipsoid"))
        .args(args)
        .env_remove("ADAPTIVE_ELLIPSOID_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let o = bin(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["coverage", "diameter", "phase", "lowerbound", "concentration", "calibrate"] {
        assert!(stdout(&o).contains(sub), "help lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bin(&["coverage", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(bin(&[]).status.code(), Some(1));

    let o = bin(&["calibrate", "--set", "gamma=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    let o = bin(&["calibrate", "--thresh-c", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("thresh_c"), "{}", stderr(&o));
}

#[test]
fn bad_config_file_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "n = 100\nbeta = -0.2\n").unwrap();
    let o = bin(&["coverage", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn calibrate_prints_analytic_constant() {
    let o = bin(&["calibrate", "--beta", "0.05", "--mode", "analytic"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let value: f64 = out
        .trim()
        .strip_prefix("mu_beta = ")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("unexpected output {out}"));
    assert!((value - 151.789).abs() < 1e-3, "{value}");
}

#[test]
fn coverage_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let o = bin(&[
        "coverage", "--n", "60", "--p", "40", "--k-grid", "1,2", "--alpha-grid", "0.5",
        "--replicates", "3", "--ordered", "--output", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("[PASS]") || stdout(&o).contains("[FAIL]"));
    let rows = std::fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 3);
    assert!(out_dir.join("ordering.csv").exists());
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn check_flag_exits_two_on_failed_band() {
    // A tiny phase sweep at alpha = 0 has an adaptivity ratio far above 2.
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "phase", "--n", "50", "--p", "200", "--k-grid", "1,12", "--alpha-grid", "0",
        "--replicates", "3", "--output", dir.path().to_str().unwrap(),
    ];
    let plain = bin(&args);
    assert_eq!(plain.status.code(), Some(0), "{}", stderr(&plain));
    assert!(stdout(&plain).contains("[FAIL]"), "{}", stdout(&plain));

    let mut checked = args.to_vec();
    checked.push("--check");
    assert_eq!(bin(&checked).status.code(), Some(2));
}
