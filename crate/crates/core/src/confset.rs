//! Confidence balls built from a split sample, and the calibration of their
//! radius constant.
//!
//! The center comes from one half of the data, the risk estimate from the
//! other. The squared radius is `U(center) + mu * log p / n` and may be
//! negative, in which case the set is empty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{thresholded_estimator, ThresholdedEstimate};
use crate::geometry::{magnitude_permutation, WeightedGeometry};
use crate::model::{gen_dataset, gen_theta, split_sample, Dataset, Magnitude, ProblemConfig, SupportPattern, TruthVector};
use crate::numeric::quantile;
use crate::rng::RandomStream;
use crate::ustat::u_stat_value;

/// How the radius constant is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// Closed-form Chebyshev constant; valid uniformly over the parameter space.
    Analytic,
    /// Monte Carlo quantile of the deviation statistic at two reference truths.
    Empirical,
}

impl std::str::FromStr for MuMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(MuMode::Analytic),
            "empirical" => Ok(MuMode::Empirical),
            other => Err(Error::config(
                "mu_mode",
                format!("expected `analytic` or `empirical`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for MuMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MuMode::Analytic => "analytic",
            MuMode::Empirical => "empirical",
        })
    }
}

/// Smallest `mu` meeting both Chebyshev budgets of `beta / 2`:
///
/// * linear term: `16 * (2 cbar^2) (1 + b^2) / mu^2 <= beta / 2`
/// * U-term: `12 (1 + b^4) / (mu^2 log p) <= beta / 2`
pub fn mu_beta_analytic(beta: f64, b: f64, cbar: f64, p: usize, n: usize) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config("beta", "must lie in (0, 1)"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::config("b", "must be finite and > 0"));
    }
    if !(cbar > 0.0 && cbar.is_finite()) {
        return Err(Error::config("cbar", "must be finite and > 0"));
    }
    if p < 2 {
        return Err(Error::config("p", "must be at least 2"));
    }
    if n < 2 {
        return Err(Error::config("n", "must be at least 2"));
    }
    let linear = (64.0 * cbar * cbar * (1.0 + b * b) / beta).sqrt();
    let quadratic = (24.0 * (1.0 + b.powi(4)) / (beta * (p as f64).ln())).sqrt();
    Ok(linear.max(quadratic))
}

/// Everything one split-sample replicate produces.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub set: ConfidenceSet,
    pub estimate: ThresholdedEstimate,
    /// `U` on the held-out half at the center.
    pub u_at_hat: f64,
}

/// Draws `2n` rows from `theta`, estimates on the second half and evaluates
/// the risk on the first.
pub fn split_and_build(
    config: &ProblemConfig,
    theta: &TruthVector,
    base: &WeightedGeometry,
    mu: f64,
    ordered: bool,
    rng: &mut RandomStream,
) -> Result<SplitOutcome> {
    let data = gen_dataset(theta, 2 * config.n, rng)?;
    let (u_half, est_half) = split_sample(&data)?;
    let estimate = thresholded_estimator(&est_half, config.thresh_c)?;
    let set = build_with_geometry(&u_half, &estimate.theta_hat, base, mu, ordered)?;
    Ok(SplitOutcome {
        u_at_hat: set.u_value,
        set,
        estimate,
    })
}

/// Pooled deviation statistics `-(U(hat) - ||theta - hat||^2) n / log p`, first
/// `reps` values at an equal-magnitude truth with `k_max` nonzeros, then `reps`
/// values at `theta = 0`.
pub fn empirical_deviations(
    config: &ProblemConfig,
    reps: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    config.validate()?;
    if reps < 200 {
        return Err(Error::config("calib_reps", "need at least 200 replicates"));
    }
    let master = rng.fork_seed();
    let k_cfg = ProblemConfig {
        k: config.k_max().min(config.p),
        ..config.clone()
    };
    let signal = gen_theta(
        &k_cfg,
        SupportPattern::Head,
        Magnitude::EqualB,
        &mut RandomStream::substream(master, &[0]),
    )?;
    let truths = [signal, TruthVector::zero(config.p)];
    let geom = WeightedGeometry::new(config.alpha, config.p)?;
    let scale = config.n as f64 / (config.p as f64).ln();

    let jobs: Vec<(usize, usize)> = (0..truths.len())
        .flat_map(|t| (0..reps).map(move |r| (t, r)))
        .collect();
    jobs.par_iter()
        .map(|&(t, r)| {
            let theta = &truths[t];
            let mut rng = RandomStream::substream(master, &[1, t as u64, r as u64]);
            let out = split_and_build(config, theta, &geom, 0.0, false, &mut rng)?;
            let dist = geom.sq_dist(&out.estimate.theta_hat, &theta.theta)?;
            Ok(-(out.u_at_hat - dist) * scale)
        })
        .collect()
}

/// `(1 - beta)` quantile of the pooled deviations. Sharper than the analytic
/// constant but only checked at two truths, so it carries no uniform guarantee.
pub fn mu_beta_empirical(config: &ProblemConfig, reps: usize, rng: &mut RandomStream) -> Result<f64> {
    let dev = empirical_deviations(config, reps, rng)?;
    Ok(quantile(&dev, 1.0 - config.beta))
}

#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    pub center: Vec<f64>,
    pub sq_radius_raw: f64,
    /// The U-statistic part of the radius.
    pub u_value: f64,
    pub geom: WeightedGeometry,
    pub mu_beta: f64,
    pub alpha: f64,
}

/// How far the set's own ordering is from the one induced by the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderingDiagnostic {
    /// Center-to-truth distance ranked by the center's magnitudes.
    pub dist_estimated_order: f64,
    /// Same distance ranked by the truth's magnitudes.
    pub dist_true_order: f64,
    /// Ranks at which the two orderings pick different coordinates.
    pub rank_mismatches: usize,
}

impl ConfidenceSet {
    pub fn contains(&self, candidate: &[f64]) -> Result<bool> {
        Ok(self.geom.sq_dist(candidate, &self.center)? <= self.sq_radius_raw)
    }

    /// Squared diameter of the ball in its own geometry.
    pub fn diameter_sq(&self) -> f64 {
        4.0 * self.sq_radius_raw.max(0.0)
    }

    pub fn is_ordered(&self) -> bool {
        self.geom.is_ordered()
    }

    /// Compares the estimated ordering with the one of `truth`. Diagnostic only.
    pub fn ordering_diagnostic(&self, truth: &TruthVector) -> Result<OrderingDiagnostic> {
        let est = self
            .geom
            .perm()
            .cloned()
            .unwrap_or_else(|| magnitude_permutation(&self.center));
        let tru = magnitude_permutation(&truth.theta);
        let base = self.geom.unordered();
        let dist_estimated_order = base.with_perm(est.clone())?.sq_dist(&self.center, &truth.theta)?;
        let dist_true_order = base.with_perm(tru.clone())?.sq_dist(&self.center, &truth.theta)?;
        let rank_mismatches = est
            .order()
            .iter()
            .zip(tru.order())
            .filter(|(a, b)| a != b)
            .count();
        Ok(OrderingDiagnostic {
            dist_estimated_order,
            dist_true_order,
            rank_mismatches,
        })
    }
}

pub fn build_confidence_set(
    u_half: &Dataset,
    center: &[f64],
    alpha: f64,
    mu: f64,
    ordered: bool,
) -> Result<ConfidenceSet> {
    let base = WeightedGeometry::new(alpha, center.len())?;
    build_with_geometry(u_half, center, &base, mu, ordered)
}

/// As [`build_confidence_set`], reusing the weight table of `base`.
pub fn build_with_geometry(
    u_half: &Dataset,
    center: &[f64],
    base: &WeightedGeometry,
    mu: f64,
    ordered: bool,
) -> Result<ConfidenceSet> {
    if center.len() != u_half.p() {
        return Err(Error::LengthMismatch {
            expected: u_half.p(),
            got: center.len(),
        });
    }
    if !mu.is_finite() {
        return Err(Error::config("mu", "must be finite"));
    }
    let geom = if ordered {
        base.with_perm(magnitude_permutation(center))?
    } else {
        base.unordered()
    };
    let u = u_stat_value(u_half, center, &geom)?;
    let sq_radius_raw = u + mu * (center.len() as f64).ln() / u_half.n() as f64;
    Ok(ConfidenceSet {
        center: center.to_vec(),
        sq_radius_raw,
        u_value: u,
        geom,
        mu_beta: mu,
        alpha: base.alpha(),
    })
}
