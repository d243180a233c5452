//! Command-line front end.
//!
//! Settings are applied in this order, later ones winning: experiment
//! defaults, `ADAPTIVE_ELLIPSOID_THREADS`, the `--config` file, then every
//! `--set key=value` and named flag in the order it appears on the command line.
//!
//! Exit codes: 0 on success or `--help`, 1 on usage or configuration errors,
//! 2 when `--check` is given and a pass band fails.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::error::{Error, Result};
use crate::harness::{
    radius_constant, run_experiment, write_outputs, ExperimentConfig, ExperimentKind,
};

pub const THREADS_ENV: &str = "ADAPTIVE_ELLIPSOID_THREADS";

/// Named flags and the configuration key each one sets.
const FLAG_KEYS: &[(&str, &str, &str)] = &[
    ("n", "n", "Rows per half sample"),
    ("p", "p", "Dimension"),
    ("k", "k", "Sparsity (also collapses the k grid)"),
    ("alpha", "alpha", "Weight exponent (also collapses the alpha grid)"),
    ("b", "b", "Signal norm bound"),
    ("beta", "beta", "Miscoverage level"),
    ("thresh-c", "thresh_c", "Threshold constant in (0, 1)"),
    ("cbar", "cbar", "Sup-norm constant for the analytic radius"),
    ("seed", "seed", "Master seed"),
    ("replicates", "replicates", "Replicates per grid cell"),
    ("k-grid", "k_grid", "Comma-separated sparsity grid"),
    ("alpha-grid", "alpha_grid", "Comma-separated exponent grid"),
    ("mu-mode", "mu_mode", "Radius constant: analytic or empirical"),
    ("output", "output_path", "Output directory"),
];

fn common_args(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Flat key = value configuration file"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("Override any configuration key"),
        )
        .arg(
            Arg::new("ordered")
                .long("ordered")
                .action(ArgAction::SetTrue)
                .help("Use the ordered (magnitude-ranked) distance"),
        )
        .arg(
            Arg::new("check")
                .long("check")
                .action(ArgAction::SetTrue)
                .help("Exit with status 2 when a pass band fails"),
        );
    for &(long, _, help) in FLAG_KEYS {
        let mut arg = Arg::new(long)
            .long(long)
            .value_name("VALUE")
            .action(ArgAction::Append)
            .help(help);
        if long == "mu-mode" {
            arg = arg.visible_alias("mode");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| common_args(Command::new(name).about(about));
    Command::new("adaptive-ellipsoid")
        .about("Adaptive confidence sets for sparse regression under weighted losses")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("coverage", "Coverage and diameter over a k x alpha grid"))
        .subcommand(sub("diameter", "Diameter scaling in k"))
        .subcommand(sub("phase", "Coverage and adaptivity across weight exponents"))
        .subcommand(sub("lowerbound", "Power of the U-test around the critical separation"))
        .subcommand(sub("concentration", "Monte Carlo checks of Gaussian tail bounds"))
        .subcommand(sub("calibrate", "Print the radius constant"))
}

/// `(position, key, value)` for every override, in command-line order.
fn ordered_overrides(m: &ArgMatches) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    if let (Some(idx), Some(vals)) = (m.indices_of("set"), m.get_many::<String>("set")) {
        for (i, kv) in idx.zip(vals) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config("set", format!("expected KEY=VALUE, got `{kv}`")))?;
            out.push((i, k.trim().to_string(), v.to_string()));
        }
    }
    for &(long, key, _) in FLAG_KEYS {
        if let (Some(idx), Some(vals)) = (m.indices_of(long), m.get_many::<String>(long)) {
            for (i, v) in idx.zip(vals) {
                out.push((i, key.to_string(), v.clone()));
            }
        }
    }
    if m.get_flag("ordered") {
        let i = m.index_of("ordered").unwrap_or(usize::MAX);
        out.push((i, "ordered".into(), "true".into()));
    }
    out.sort_by_key(|(i, _, _)| *i);
    Ok(out)
}

/// Builds the configuration for a subcommand from the environment, the
/// config file and the overrides.
pub fn resolve_config(kind: ExperimentKind, m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(kind);
    if let Ok(v) = std::env::var(THREADS_ENV) {
        cfg.set("workers", &v)?;
    }
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for (_, key, value) in ordered_overrides(m)? {
        cfg.set(&key, &value)?;
    }
    // the subcommand decides the experiment, whatever the file says
    cfg.experiment = kind;
    Ok(cfg)
}

fn execute(name: &str, m: &ArgMatches) -> Result<i32> {
    let kind = match name {
        "coverage" | "calibrate" => ExperimentKind::Coverage,
        "diameter" => ExperimentKind::DiameterSweep,
        "phase" => ExperimentKind::PhaseSweep,
        "lowerbound" => ExperimentKind::Lowerbound,
        "concentration" => ExperimentKind::Concentration,
        other => return Err(Error::config("subcommand", format!("unknown `{other}`"))),
    };
    let cfg = resolve_config(kind, m)?;

    if name == "calibrate" {
        cfg.validate()?;
        let mu = radius_constant(&cfg, cfg.base.alpha)?;
        println!("mu_beta = {mu:.4} (mode: {})", cfg.mu_mode);
        return Ok(0);
    }

    let out = run_experiment(&cfg)?;
    let files = write_outputs(&cfg, &out)?;
    println!("experiment: {} (radius constant: {})", out.summary.experiment, cfg.mu_mode);
    for band in &out.summary.bands {
        println!(
            "[{}] {}: {:.4} (threshold {:.4})",
            if band.pass { "PASS" } else { "FAIL" },
            band.name,
            band.value,
            band.threshold
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    if m.get_flag("check") && !out.summary.all_pass() {
        return Ok(2);
    }
    Ok(0)
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match execute(name, sub) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matches(args: &[&str]) -> (String, ArgMatches) {
        let m = command()
            .try_get_matches_from(std::iter::once("adaptive-ellipsoid").chain(args.iter().copied()))
            .unwrap();
        let (name, sub) = m.subcommand().unwrap();
        (name.to_string(), sub.clone())
    }

    #[test]
    fn later_flags_win() {
        let (_, m) = matches(&["coverage", "--k", "3", "--set", "k=7", "--n", "100", "--set", "n=50"]);
        let cfg = resolve_config(ExperimentKind::Coverage, &m).unwrap();
        assert_eq!(cfg.base.k, 7);
        assert_eq!(cfg.k_grid, vec![7]);
        assert_eq!(cfg.base.n, 50);

        let (_, m) = matches(&["coverage", "--set", "k=7", "--k", "3"]);
        assert_eq!(resolve_config(ExperimentKind::Coverage, &m).unwrap().base.k, 3);
    }

    #[test]
    fn flags_shadow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "n = 120\np = 90\nalpha = 0.5\n").unwrap();
        let (_, m) = matches(&["diameter", "--config", path.to_str().unwrap(), "--p", "80", "--ordered"]);
        let cfg = resolve_config(ExperimentKind::DiameterSweep, &m).unwrap();
        assert_eq!(cfg.base.n, 120);
        assert_eq!(cfg.base.p, 80);
        assert_eq!(cfg.alpha_grid, vec![0.5]);
        assert!(cfg.ordered);
        assert_eq!(cfg.experiment, ExperimentKind::DiameterSweep);
    }

    #[test]
    fn mode_alias() {
        let (_, m) = matches(&["calibrate", "--mode", "empirical"]);
        let cfg = resolve_config(ExperimentKind::Coverage, &m).unwrap();
        assert_eq!(cfg.mu_mode, crate::confset::MuMode::Empirical);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["adaptive-ellipsoid", "--help"]), 0);
        assert_eq!(run(["adaptive-ellipsoid", "coverage", "--help"]), 0);
        assert_eq!(run(["adaptive-ellipsoid", "coverage", "--bogus"]), 1);
        assert_eq!(run(["adaptive-ellipsoid", "nonsense"]), 1);
        assert_eq!(run(["adaptive-ellipsoid"]), 1);
        assert_eq!(run(["adaptive-ellipsoid", "calibrate", "--beta", "2"]), 1);
        assert_eq!(run(["adaptive-ellipsoid", "calibrate", "--set", "nope=1"]), 1);
        assert_eq!(run(["adaptive-ellipsoid", "calibrate", "--beta", "0.05", "--mode", "analytic"]), 0);
    }
}
