//! Experiment configuration and its flat `key = value` text form.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::confset::MuMode;
use crate::error::{Error, Result};
use crate::model::{Magnitude, ProblemConfig, SupportPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Coverage,
    DiameterSweep,
    PhaseSweep,
    Lowerbound,
    Concentration,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::DiameterSweep => "diameter_sweep",
            ExperimentKind::PhaseSweep => "phase_sweep",
            ExperimentKind::Lowerbound => "lowerbound",
            ExperimentKind::Concentration => "concentration",
        }
    }

    /// Whether the experiment produces per-replicate confidence-set rows.
    pub fn has_rows(self) -> bool {
        matches!(
            self,
            ExperimentKind::Coverage | ExperimentKind::DiameterSweep | ExperimentKind::PhaseSweep
        )
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "coverage" => ExperimentKind::Coverage,
            "diameter" | "diameter_sweep" => ExperimentKind::DiameterSweep,
            "phase" | "phase_sweep" => ExperimentKind::PhaseSweep,
            "lowerbound" => ExperimentKind::Lowerbound,
            "concentration" => ExperimentKind::Concentration,
            other => {
                return Err(Error::config(
                    "experiment",
                    format!("unknown experiment `{other}`"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub base: ProblemConfig,
    pub experiment: ExperimentKind,
    pub k_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub replicates: usize,
    pub mu_mode: MuMode,
    pub ordered: bool,
    pub output_path: PathBuf,
    pub pattern: SupportPattern,
    pub magnitude: Magnitude,
    /// Replicates per reference truth for the empirical radius constant.
    pub calib_reps: usize,
    /// Separation multipliers of the critical rate for the lower-bound run.
    pub rho_below: f64,
    pub rho_above: f64,
    /// Prior constant; `None` picks `1 / (2 log p)`.
    pub prior_c: Option<f64>,
    pub k_prime: usize,
    /// Size of the U-test in the lower-bound run.
    pub size: f64,
    /// Worker threads; 0 lets the pool decide. Never affects results.
    #[serde(skip)]
    pub workers: usize,
}

/// Keys accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "n", "p", "k", "alpha", "b", "beta", "thresh_c", "cbar", "seed", "experiment", "k_grid",
    "alpha_grid", "replicates", "mu_mode", "ordered", "output_path", "pattern", "magnitude",
    "calib_reps", "rho_below", "rho_above", "prior_c", "k_prime", "size", "workers",
];

impl ExperimentConfig {
    /// Defaults for one experiment kind.
    pub fn new(experiment: ExperimentKind) -> Self {
        let base = ProblemConfig::default();
        let (k_grid, alpha_grid, replicates) = match experiment {
            ExperimentKind::Coverage => (vec![2, 5, 10], vec![0.25, 0.5], 300),
            ExperimentKind::DiameterSweep => (vec![4, 8, 16, 32], vec![0.0, 0.25, 0.5], 100),
            ExperimentKind::PhaseSweep => (vec![2, 10], vec![0.0, 0.125, 0.25, 0.375, 0.5], 200),
            ExperimentKind::Lowerbound => (vec![40], vec![0.0], 300),
            ExperimentKind::Concentration => (vec![base.k], vec![base.alpha], 500),
        };
        Self {
            base,
            experiment,
            k_grid,
            alpha_grid,
            replicates,
            mu_mode: MuMode::Analytic,
            ordered: false,
            output_path: PathBuf::from("results").join(experiment.name()),
            pattern: SupportPattern::Head,
            magnitude: Magnitude::EqualB,
            calib_reps: 200,
            rho_below: 0.3,
            rho_above: 3.0,
            prior_c: None,
            k_prime: 1,
            size: 0.05,
            workers: 0,
        }
    }

    /// Applies one `key = value` setting. Setting `k` or `alpha` also collapses
    /// the corresponding grid to that single value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "n" => self.base.n = parse(key, value)?,
            "p" => self.base.p = parse(key, value)?,
            "k" => {
                self.base.k = parse(key, value)?;
                self.k_grid = vec![self.base.k];
            }
            "alpha" => {
                self.base.alpha = parse(key, value)?;
                self.alpha_grid = vec![self.base.alpha];
            }
            "b" => self.base.b = parse(key, value)?,
            "beta" => self.base.beta = parse(key, value)?,
            "thresh_c" => self.base.thresh_c = parse(key, value)?,
            "cbar" => self.base.cbar = parse(key, value)?,
            "seed" => self.base.seed = parse(key, value)?,
            "experiment" => self.experiment = value.parse()?,
            "k_grid" => self.k_grid = parse_list(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "mu_mode" => self.mu_mode = value.parse()?,
            "ordered" => self.ordered = parse(key, value)?,
            "output_path" | "output" => self.output_path = PathBuf::from(value),
            "pattern" => {
                self.pattern = match value {
                    "head" => SupportPattern::Head,
                    "random_support" | "random" => SupportPattern::RandomSupport,
                    _ => return Err(Error::config(key, "expected `head` or `random_support`")),
                }
            }
            "magnitude" => self.magnitude = parse_magnitude(value)?,
            "calib_reps" => self.calib_reps = parse(key, value)?,
            "rho_below" => self.rho_below = parse(key, value)?,
            "rho_above" => self.rho_above = parse(key, value)?,
            "prior_c" => {
                self.prior_c = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "k_prime" => self.k_prime = parse(key, value)?,
            "size" => self.size = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config("config", format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.k_grid.is_empty() {
            return Err(Error::config("k_grid", "must not be empty"));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::config("alpha_grid", "must not be empty"));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k > self.base.p) {
            return Err(Error::config("k_grid", format!("sparsity {k} exceeds p = {}", self.base.p)));
        }
        if self.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::config("alpha_grid", "entries must be finite and >= 0"));
        }
        if self.experiment == ExperimentKind::DiameterSweep && self.k_grid.len() < 3 {
            return Err(Error::config("k_grid", "a diameter sweep needs at least 3 points"));
        }
        if self.mu_mode == MuMode::Empirical && self.calib_reps < 200 {
            return Err(Error::config("calib_reps", "need at least 200 replicates"));
        }
        if !(self.size > 0.0 && self.size < 1.0) {
            return Err(Error::config("size", "must lie in (0, 1)"));
        }
        if !(self.rho_below >= 0.0 && self.rho_above >= 0.0) {
            return Err(Error::config("rho_below", "multipliers must be >= 0"));
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `equal_b` or `snr:<a>`.
fn parse_magnitude(value: &str) -> Result<Magnitude> {
    if value == "equal_b" {
        return Ok(Magnitude::EqualB);
    }
    if let Some(a) = value.strip_prefix("snr:").or_else(|| value.strip_prefix("snr")) {
        let a: f64 = parse("magnitude", a.trim_start_matches(['(', ':']).trim_end_matches(')'))?;
        return Ok(Magnitude::Snr(a));
    }
    Err(Error::config("magnitude", "expected `equal_b` or `snr:<a>`"))
}
