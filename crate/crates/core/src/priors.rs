//! Sparse spike prior used for the testing lower bound, its diagnostics, and a
//! Monte Carlo demonstration that the U-test loses power below the critical
//! separation.
//!
//! Each coordinate is independently `0` with probability `1 - h` and `±t`
//! with probability `h / 2` each, where
//!
//! ```text
//! h = c k^{1-2a} log p / sum_m m^{-2a},    t = rho / (c sqrt(k^{1-2a} log p)).
//! ```
//!
//! The power experiment only shows that one concrete test fails; it says
//! nothing about other tests.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{rank_weights, WeightedGeometry};
use crate::model::{gen_dataset, TruthVector};
use crate::numeric::{mean, quantile};
use crate::rng::RandomStream;
use crate::ustat::u_stat_value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorSpec {
    pub p: usize,
    pub k: usize,
    pub k_prime: usize,
    pub alpha: f64,
    pub rho_star: f64,
    pub c: f64,
    pub h: f64,
    pub t: f64,
}

impl PriorSpec {
    /// Expected number of spikes, `p h`.
    pub fn expected_spikes(&self) -> f64 {
        self.p as f64 * self.h
    }
}

/// `k^{1-2a} log p`.
fn effective_size(k: usize, p: usize, alpha: f64) -> f64 {
    (k as f64).powf(1.0 - 2.0 * alpha) * (p as f64).ln()
}

fn weight_sum(alpha: f64, p: usize) -> f64 {
    rank_weights(alpha, p).iter().sum()
}

/// Largest `k'` accepted for a given `k`: `k^{1-2a} / log k` for `k >= 2`.
pub fn k_prime_limit(k: usize, alpha: f64) -> f64 {
    let core = (k as f64).powf(1.0 - 2.0 * alpha);
    if k >= 2 {
        core / (k as f64).ln()
    } else {
        core
    }
}

pub fn make_prior(
    p: usize,
    k: usize,
    k_prime: usize,
    alpha: f64,
    rho_star: f64,
    c: f64,
) -> Result<PriorSpec> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::config("prior_c", "must lie in (0, 1)"));
    }
    if p < 2 {
        return Err(Error::config("p", "must be at least 2"));
    }
    if k == 0 || k > p {
        return Err(Error::config("k", format!("must lie in 1..={p}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config("alpha", "must be finite and >= 0"));
    }
    if !(rho_star >= 0.0 && rho_star.is_finite()) {
        return Err(Error::config("rho_star", "must be finite and >= 0"));
    }
    let limit = k_prime_limit(k, alpha);
    if k_prime as f64 > limit {
        return Err(Error::config(
            "k_prime",
            format!("{k_prime} exceeds the sparsity allowance {limit:.3} for k = {k}"),
        ));
    }
    let sum = weight_sum(alpha, p);
    let eff = effective_size(k, p, alpha);
    let h = c * eff / sum;
    if h > 1.0 {
        return Err(Error::InfeasiblePrior(format!(
            "activation probability {h:.4} exceeds 1"
        )));
    }
    let t = rho_star / (c * eff.sqrt());
    let lhs = t * t * h * sum;
    let rhs = rho_star * rho_star / c;
    if (lhs - rhs).abs() > 1e-12 * rhs.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!(
            "spike identity failed: {lhs} vs {rhs}"
        )));
    }
    Ok(PriorSpec {
        p,
        k,
        k_prime,
        alpha,
        rho_star,
        c,
        h,
        t,
    })
}

/// `min{ sqrt(k^{1-2a} log p / n), p^{1/4-a} / sqrt(n) }`.
pub fn critical_separation(k: usize, p: usize, n: usize, alpha: f64) -> f64 {
    let sparse = (effective_size(k, p, alpha) / n as f64).sqrt();
    let dense = (p as f64).powf(0.25 - alpha) / (n as f64).sqrt();
    sparse.min(dense)
}

pub fn sample_prior(spec: &PriorSpec, rng: &mut RandomStream) -> Vec<f64> {
    (0..spec.p)
        .map(|_| {
            let u = rng.uniform();
            if u < spec.h / 2.0 {
                spec.t
            } else if u < spec.h {
                -spec.t
            } else {
                0.0
            }
        })
        .collect()
}

/// Weighted distance from `v` to the set of `k'`-sparse vectors, reached by
/// zeroing the `k'` coordinates with the largest `|v_m| m^{-a}`.
pub fn h1_distance(v: &[f64], k_prime: usize, alpha: f64) -> f64 {
    let w = rank_weights(alpha, v.len());
    let mut terms: Vec<f64> = v.iter().zip(&w).map(|(x, w)| w * x * x).collect();
    terms.sort_by(|a, b| b.total_cmp(a));
    terms.iter().skip(k_prime).sum::<f64>().sqrt()
}

/// Whether a draw lies in the alternative: at most `k` nonzeros and at
/// distance at least `rho_star` from every `k'`-sparse vector.
pub fn in_alternative(v: &[f64], spec: &PriorSpec) -> bool {
    let nnz = v.iter().filter(|&&x| x != 0.0).count();
    nnz <= spec.k && h1_distance(v, spec.k_prime, spec.alpha) >= spec.rho_star
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorDiagnostics {
    pub draws: usize,
    pub mean_spikes: f64,
    pub mean_sq_norm: f64,
    pub frac_exceeds_k: f64,
    /// `p h (1 - h) / (k - p h)^2`; infinite when `k <= p h`.
    pub exceed_bound: f64,
    pub frac_in_alternative: f64,
    pub exp_moment_mean: f64,
    pub exp_moment_trimmed_mean: f64,
    /// Fraction removed from each tail for the trimmed mean.
    pub trim_fraction: f64,
    /// `exp(p h^2 (e^{n t^2} - 1 - n t^2))`.
    pub exp_moment_bound: f64,
}

pub fn chebyshev_exceed_bound(spec: &PriorSpec) -> f64 {
    let ph = spec.expected_spikes();
    let gap = spec.k as f64 - ph;
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        ph * (1.0 - spec.h) / (gap * gap)
    }
}

pub fn exp_moment_bound(spec: &PriorSpec, n: usize) -> f64 {
    let nt2 = n as f64 * spec.t * spec.t;
    (spec.p as f64 * spec.h * spec.h * (nt2.exp_m1() - nt2)).exp()
}

fn trimmed_mean(xs: &[f64], frac: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = (frac * sorted.len() as f64).floor() as usize;
    mean(&sorted[cut..sorted.len() - cut])
}

/// Monte Carlo over `draws` independent pairs `(v, v')`.
pub fn prior_diagnostics(
    spec: &PriorSpec,
    n: usize,
    draws: usize,
    rng: &mut RandomStream,
) -> Result<PriorDiagnostics> {
    if draws < 1000 {
        return Err(Error::config("draws", "need at least 1000 draws"));
    }
    if spec.h <= 0.0 {
        return Err(Error::Degenerate("activation probability is zero".into()));
    }
    let w = rank_weights(spec.alpha, spec.p);
    let master = rng.fork_seed();

    struct PairStats {
        spikes: f64,
        sq_norm: f64,
        exceeds: bool,
        in_alt: bool,
        moment: f64,
    }

    let stats: Vec<PairStats> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::substream(master, &[i]);
            let v = sample_prior(spec, &mut rng);
            let v2 = sample_prior(spec, &mut rng);
            let spikes = v.iter().filter(|&&x| x != 0.0).count();
            let sq_norm: f64 = v.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            let inner: f64 = v.iter().zip(&v2).map(|(a, b)| a * b).sum();
            PairStats {
                spikes: spikes as f64,
                sq_norm,
                exceeds: spikes > spec.k,
                in_alt: in_alternative(&v, spec),
                moment: (n as f64 * inner).exp(),
            }
        })
        .collect();

    let frac = |f: fn(&PairStats) -> bool| {
        stats.iter().filter(|s| f(s)).count() as f64 / draws as f64
    };
    let moments: Vec<f64> = stats.iter().map(|s| s.moment).collect();
    let trim_fraction = 0.01;
    Ok(PriorDiagnostics {
        draws,
        mean_spikes: mean(&stats.iter().map(|s| s.spikes).collect::<Vec<_>>()),
        mean_sq_norm: mean(&stats.iter().map(|s| s.sq_norm).collect::<Vec<_>>()),
        frac_exceeds_k: frac(|s| s.exceeds),
        exceed_bound: chebyshev_exceed_bound(spec),
        frac_in_alternative: frac(|s| s.in_alt),
        exp_moment_mean: mean(&moments),
        exp_moment_trimmed_mean: trimmed_mean(&moments, trim_fraction),
        trim_fraction,
        exp_moment_bound: exp_moment_bound(spec, n),
    })
}

/// Error rates of the test "reject iff U(0) > tau" at one separation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRecord {
    pub rho_star: f64,
    pub tau: f64,
    pub type_i: f64,
    pub type_ii: f64,
    pub error_sum: f64,
    /// Average number of prior draws needed to land in the alternative.
    pub mean_draws_per_alternative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCollapseReport {
    pub n: usize,
    pub reps: usize,
    pub size: f64,
    pub below: PowerRecord,
    pub above: PowerRecord,
    pub note: String,
}

const MAX_PRIOR_ATTEMPTS: usize = 100_000;

fn draw_alternative(spec: &PriorSpec, rng: &mut RandomStream) -> Result<(Vec<f64>, usize)> {
    for attempt in 1..=MAX_PRIOR_ATTEMPTS {
        let v = sample_prior(spec, rng);
        if in_alternative(&v, spec) {
            return Ok((v, attempt));
        }
    }
    Err(Error::InfeasiblePrior(format!(
        "no draw reached the alternative in {MAX_PRIOR_ATTEMPTS} attempts"
    )))
}

/// Calibrates `tau` on one null pass, estimates the size on a second and the
/// power on draws from the prior restricted to the alternative.
pub fn test_power(
    spec: &PriorSpec,
    n: usize,
    reps: usize,
    size: f64,
    seed: u64,
) -> Result<PowerRecord> {
    if reps < 2 {
        return Err(Error::config("replicates", "need at least 2"));
    }
    if !(size > 0.0 && size < 1.0) {
        return Err(Error::config("size", "must lie in (0, 1)"));
    }
    let geom = WeightedGeometry::new(spec.alpha, spec.p)?;
    let zero = TruthVector::zero(spec.p);
    let null_u = |pass: u64| -> Result<Vec<f64>> {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = RandomStream::substream(seed, &[pass, r]);
                let d = gen_dataset(&zero, n, &mut rng)?;
                u_stat_value(&d, &zero.theta, &geom)
            })
            .collect()
    };
    let tau = quantile(&null_u(0)?, 1.0 - size);
    let type_i = null_u(1)?.iter().filter(|&&u| u > tau).count() as f64 / reps as f64;

    let alt: Vec<(bool, usize)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::substream(seed, &[2, r]);
            let (v, attempts) = draw_alternative(spec, &mut rng)?;
            let truth = TruthVector::from_vec(v);
            let d = gen_dataset(&truth, n, &mut rng)?;
            Ok((u_stat_value(&d, &zero.theta, &geom)? > tau, attempts))
        })
        .collect::<Result<_>>()?;
    let power = alt.iter().filter(|(rej, _)| *rej).count() as f64 / reps as f64;
    let attempts = alt.iter().map(|(_, a)| *a).sum::<usize>() as f64 / reps as f64;
    Ok(PowerRecord {
        rho_star: spec.rho_star,
        tau,
        type_i,
        type_ii: 1.0 - power,
        error_sum: type_i + 1.0 - power,
        mean_draws_per_alternative: attempts,
    })
}

pub fn power_collapse_experiment(
    spec_below: &PriorSpec,
    spec_above: &PriorSpec,
    n: usize,
    reps: usize,
    size: f64,
    rng: &mut RandomStream,
) -> Result<PowerCollapseReport> {
    let master = rng.fork_seed();
    Ok(PowerCollapseReport {
        n,
        reps,
        size,
        below: test_power(spec_below, n, reps, size, crate::rng::derive_seed(master, &[0]))?,
        above: test_power(spec_above, n, reps, size, crate::rng::derive_seed(master, &[1]))?,
        note: "Error rates of one specific test (reject when U(0) exceeds its null quantile). \
               A large error sum below the critical separation illustrates, and does not prove, \
               that every test fails there."
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{binomial_se, std_error};
    use proptest::prelude::*;

    #[test]
    fn l2_case_arithmetic() {
        let spec = make_prior(10_000, 100, 0, 0.0, 1.0, 0.5).unwrap();
        let expected = 0.5 * 100.0 * 10_000f64.ln() / 10_000.0;
        assert!((spec.h - expected).abs() < 1e-15);
        assert!((spec.h - 0.04605).abs() < 1e-5);
    }

    #[test]
    fn spike_identity_holds() {
        for &(p, k, alpha, rho, c) in &[
            (200usize, 5usize, 0.25, 0.7, 0.3),
            (1000, 40, 0.0, 0.2, 0.01),
            (50, 50, 0.5, 3.0, 0.9),
        ] {
            let spec = make_prior(p, k, 0, alpha, rho, c).unwrap();
            let lhs = spec.t * spec.t * spec.h * weight_sum(alpha, p);
            assert!((lhs - rho * rho / c).abs() <= 1e-12 * rho * rho / c);
        }
    }

    #[test]
    fn rejections() {
        assert!(matches!(make_prior(100, 5, 0, 0.0, 1.0, 1.0), Err(Error::Config { .. })));
        assert!(matches!(make_prior(100, 5, 0, 0.0, 1.0, 0.0), Err(Error::Config { .. })));
        // c k log p / p > 1
        assert!(matches!(
            make_prior(100, 50, 0, 0.0, 1.0, 0.9),
            Err(Error::InfeasiblePrior(_))
        ));
        // 40 / log 40 ~ 10.8
        assert!(make_prior(400, 40, 10, 0.0, 1.0, 0.01).is_ok());
        assert!(make_prior(400, 40, 11, 0.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn zero_activation_gives_zero_draws() {
        let spec = PriorSpec {
            p: 30,
            k: 3,
            k_prime: 0,
            alpha: 0.0,
            rho_star: 1.0,
            c: 0.5,
            h: 0.0,
            t: 1.0,
        };
        let mut rng = RandomStream::from_seed(1);
        for _ in 0..20 {
            assert!(sample_prior(&spec, &mut rng).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn prior_moments() {
        let spec = make_prior(300, 10, 0, 0.25, 0.8, 0.2).unwrap();
        let w = rank_weights(spec.alpha, spec.p);
        let mut rng = RandomStream::from_seed(2);
        let draws: Vec<Vec<f64>> = (0..2000).map(|_| sample_prior(&spec, &mut rng)).collect();
        let spikes: Vec<f64> = draws
            .iter()
            .map(|v| v.iter().filter(|&&x| x != 0.0).count() as f64)
            .collect();
        let norms: Vec<f64> = draws
            .iter()
            .map(|v| v.iter().zip(&w).map(|(x, w)| w * x * x).sum())
            .collect();
        let ph = spec.expected_spikes();
        assert!((mean(&spikes) - ph).abs() < 3.0 * std_error(&spikes));
        let target = spec.rho_star.powi(2) / spec.c;
        assert!((mean(&norms) - target).abs() < 3.0 * std_error(&norms));

        // per-coordinate marginals
        let total = (draws.len() * spec.p) as f64;
        let count = |val: f64| draws.iter().flatten().filter(|&&x| x == val).count() as f64 / total;
        let band = 4.0 * (spec.h / total).sqrt();
        assert!((count(spec.t) - spec.h / 2.0).abs() < band);
        assert!((count(-spec.t) - spec.h / 2.0).abs() < band);
        assert!((count(0.0) - (1.0 - spec.h)).abs() < band);
    }

    fn exhaustive_h1(v: &[f64], k_prime: usize, alpha: f64) -> f64 {
        let p = v.len();
        let w = rank_weights(alpha, p);
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << p) {
            if mask.count_ones() as usize > k_prime {
                continue;
            }
            let d: f64 = (0..p)
                .filter(|j| mask & (1 << j) == 0)
                .map(|j| w[j] * v[j] * v[j])
                .sum();
            best = best.min(d);
        }
        best.sqrt()
    }

    proptest! {
        #[test]
        fn h1_projection_matches_exhaustive_search(
            v in prop::collection::vec(-2.0f64..2.0, 1..=12),
            k_prime in 0usize..=3,
            alpha in prop::sample::select(vec![0.0, 0.25, 0.5]),
        ) {
            let fast = h1_distance(&v, k_prime, alpha);
            let slow = exhaustive_h1(&v, k_prime, alpha);
            prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow));
        }
    }

    #[test]
    fn critical_rate_reference() {
        // alpha = 0, n = p = 400, k = 40: sqrt(40 log 400 / 400) = 0.774, 400^{1/4}/20 = 0.2236
        let r = critical_separation(40, 400, 400, 0.0);
        assert!((r - 400f64.powf(0.25) / 20.0).abs() < 1e-12);
        assert!((r - 0.2236).abs() < 1e-4);
    }

    /// `c = 1/(2 log p)` puts the expected spike count at `k/2` when `alpha = 0`.
    fn half_fill_c(p: usize) -> f64 {
        0.5 / (p as f64).ln()
    }

    #[test]
    fn sparsity_exceedance_within_chebyshev() {
        let p = 200;
        let spec = make_prior(p, 20, 1, 0.0, 0.1, half_fill_c(p)).unwrap();
        let diag = prior_diagnostics(&spec, 200, 4000, &mut RandomStream::from_seed(3)).unwrap();
        let slack = 3.0 * binomial_se(diag.exceed_bound.min(1.0), diag.draws);
        assert!(diag.frac_exceeds_k <= diag.exceed_bound + slack, "{diag:?}");
    }

    #[test]
    fn exp_moment_near_one_below_critical_rate() {
        let (p, n, k) = (200, 200, 20);
        let rho = 0.1 * critical_separation(k, p, n, 0.0);
        let spec = make_prior(p, k, 1, 0.0, rho, half_fill_c(p)).unwrap();
        let diag = prior_diagnostics(&spec, n, 10_000, &mut RandomStream::from_seed(4)).unwrap();
        eprintln!(
            "exp moment: mean {:.4}, trimmed {:.4}, bound {:.4}",
            diag.exp_moment_mean, diag.exp_moment_trimmed_mean, diag.exp_moment_bound
        );
        assert!(diag.exp_moment_mean <= 1.05);
        assert!(diag.exp_moment_bound <= 1.05);
    }

    #[test]
    fn prior_mass_concentrates_on_alternative() {
        let p = 1000;
        let k = (p as f64).powf(0.6).round() as usize;
        let rho = critical_separation(k, p, 1000, 0.0);
        let spec = make_prior(p, k, 1, 0.0, rho, half_fill_c(p)).unwrap();
        let diag = prior_diagnostics(&spec, 1000, 2000, &mut RandomStream::from_seed(5)).unwrap();
        assert!(diag.frac_in_alternative >= 0.9, "{diag:?}");
    }

    #[test]
    fn diagnostics_reject_small_draws() {
        let spec = make_prior(100, 5, 0, 0.0, 0.1, 0.1).unwrap();
        assert!(prior_diagnostics(&spec, 100, 999, &mut RandomStream::from_seed(6)).is_err());
    }

    #[test]
    fn no_separation_means_no_power() {
        let p = 100;
        let spec = make_prior(p, 10, 0, 0.0, 0.0, half_fill_c(p)).unwrap();
        let rec = test_power(&spec, 100, 300, 0.05, 7).unwrap();
        assert!((rec.error_sum - 1.0).abs() < 0.1, "{rec:?}");
    }

    #[test]
    fn power_is_monotone_in_separation() {
        let (p, n, k) = (200, 200, 20);
        let crit = critical_separation(k, p, n, 0.0);
        let powers: Vec<f64> = [0.3, 1.0, 2.0, 3.0]
            .iter()
            .map(|m| {
                let spec = make_prior(p, k, 1, 0.0, m * crit, half_fill_c(p)).unwrap();
                1.0 - test_power(&spec, n, 200, 0.05, 8).unwrap().type_ii
            })
            .collect();
        let noise = 2.0 * binomial_se(0.5, 200);
        let inversions = powers.windows(2).filter(|w| w[1] + noise < w[0]).count();
        let soft = powers.windows(2).filter(|w| w[1] < w[0]).count();
        assert_eq!(inversions, 0, "{powers:?}");
        assert!(soft <= 1, "{powers:?}");
    }
}
