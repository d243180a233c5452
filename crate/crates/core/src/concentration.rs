//! Samplers and Monte Carlo checks for the Gaussian tail bounds the analysis
//! leans on: chi-square sums, sums of Gaussian products, their maxima, and
//! one row of the empirical Gram matrix applied to the truth.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TruthVector;
use crate::numeric::{fit_line, mean};
use crate::rng::RandomStream;

/// `sum_{i<n} g_i^2`.
pub fn sample_q(n: usize, rng: &mut RandomStream) -> f64 {
    (0..n).map(|_| rng.normal().powi(2)).sum()
}

/// `sum_{i<n} g_i g'_i`.
pub fn sample_z(n: usize, rng: &mut RandomStream) -> f64 {
    sample_z_pair(n, rng).0
}

/// One draw of `Z` computed two ways: directly and as
/// `(1/4) sum ((g + g')^2 - (g - g')^2)`.
pub fn sample_z_pair(n: usize, rng: &mut RandomStream) -> (f64, f64) {
    let mut direct = 0.0;
    let mut polar = 0.0;
    for _ in 0..n {
        let g = rng.normal();
        let h = rng.normal();
        direct += g * h;
        polar += (g + h).powi(2) - (g - h).powi(2);
    }
    (direct, 0.25 * polar)
}

/// Exceedance frequencies on a grid together with a fitted envelope
/// `C exp(-C' t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheckReport {
    pub t_grid: Vec<f64>,
    pub empirical_exceed: Vec<f64>,
    pub bound_curve: Vec<f64>,
    pub draws: usize,
    pub fitted_c: f64,
    pub fitted_c_prime: f64,
}

impl TailCheckReport {
    /// The envelope decays and sits above every empirical point.
    pub fn envelope_holds(&self) -> bool {
        self.fitted_c_prime > 0.0
            && self
                .empirical_exceed
                .iter()
                .zip(&self.bound_curve)
                .all(|(e, b)| *e <= b * (1.0 + 1e-12))
    }
}

/// Least squares on `log exceed` over the points with positive frequency,
/// then the intercept is raised until the envelope dominates every point.
fn fit_envelope(t_grid: &[f64], exceed: &[f64]) -> (f64, f64) {
    let (ts, logs): (Vec<f64>, Vec<f64>) = t_grid
        .iter()
        .zip(exceed)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    if ts.len() < 2 {
        return (exceed.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE), 0.0);
    }
    let line = fit_line(&ts, &logs);
    let c_prime = -line.slope;
    let c = t_grid
        .iter()
        .zip(exceed)
        .map(|(&t, &e)| e * (c_prime * t).exp())
        .fold(0.0, f64::max);
    (c, c_prime)
}

fn tail_report(samples: &[f64], t_grid: &[f64], level: impl Fn(f64) -> f64) -> TailCheckReport {
    let draws = samples.len();
    let empirical_exceed: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let cut = level(t);
            samples.iter().filter(|&&s| s >= cut).count() as f64 / draws as f64
        })
        .collect();
    let (fitted_c, fitted_c_prime) = fit_envelope(t_grid, &empirical_exceed);
    let bound_curve = t_grid
        .iter()
        .map(|&t| fitted_c * (-fitted_c_prime * t).exp())
        .collect();
    TailCheckReport {
        t_grid: t_grid.to_vec(),
        empirical_exceed,
        bound_curve,
        draws,
        fitted_c,
        fitted_c_prime,
    }
}

fn parallel_draws(draws: usize, rng: &mut RandomStream, f: impl Fn(&mut RandomStream) -> f64 + Sync) -> Vec<f64> {
    let master = rng.fork_seed();
    (0..draws as u64)
        .into_par_iter()
        .map(|i| f(&mut RandomStream::substream(master, &[i])))
        .collect()
}

/// Frequencies of `|Q(n) - n| >= sqrt(n t) + t`.
pub fn q_tail_check(n: usize, t_grid: &[f64], draws: usize, rng: &mut RandomStream) -> Result<TailCheckReport> {
    check_sizes(n, draws)?;
    let nf = n as f64;
    let samples = parallel_draws(draws, rng, |r| (sample_q(n, r) - nf).abs());
    Ok(tail_report(&samples, t_grid, |t| (nf * t).sqrt() + t))
}

/// Frequencies of `|Z(n)| >= sqrt(n t) + t`.
pub fn z_tail_check(n: usize, t_grid: &[f64], draws: usize, rng: &mut RandomStream) -> Result<TailCheckReport> {
    check_sizes(n, draws)?;
    let nf = n as f64;
    let samples = parallel_draws(draws, rng, |r| sample_z(n, r).abs());
    Ok(tail_report(&samples, t_grid, |t| (nf * t).sqrt() + t))
}

fn check_sizes(n: usize, draws: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    if draws == 0 {
        return Err(Error::config("draws", "must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxZReport {
    pub n: usize,
    pub p: usize,
    pub c4: f64,
    pub draws: usize,
    pub mean_max: f64,
    /// `mean_max / sqrt(n log p)`; NaN when `p = 1`.
    pub ratio: f64,
    /// `2 (2 + sqrt(log C4))`.
    pub bound: f64,
    pub pass: bool,
}

/// Mean of `max_{j<p} Z_j(n)` over `draws` replicates.
pub fn max_z_check(n: usize, p: usize, c4: f64, draws: usize, rng: &mut RandomStream) -> Result<MaxZReport> {
    check_sizes(n, draws)?;
    if p == 0 {
        return Err(Error::config("p", "must be at least 1"));
    }
    if !(c4 >= 1.0 && c4.is_finite()) {
        return Err(Error::config("c4", "must be finite and >= 1"));
    }
    if p as f64 > c4 * n as f64 {
        return Err(Error::config("p", format!("p = {p} exceeds C4 n = {}", c4 * n as f64)));
    }
    let maxima = parallel_draws(draws, rng, |r| {
        (0..p).map(|_| sample_z(n, r)).fold(f64::NEG_INFINITY, f64::max)
    });
    let mean_max = mean(&maxima);
    let scale = (n as f64 * (p as f64).ln()).sqrt();
    let ratio = if p > 1 { mean_max / scale } else { f64::NAN };
    let bound = 2.0 * (2.0 + c4.ln().sqrt());
    Ok(MaxZReport {
        n,
        p,
        c4,
        draws,
        mean_max,
        ratio,
        bound,
        pass: p == 1 || ratio <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramRowReport {
    pub n: usize,
    pub p: usize,
    pub coord: usize,
    pub thresh_c: f64,
    /// `((C - 1) / 2) sqrt(log p / n)`.
    pub threshold: f64,
    pub draws: usize,
    /// Fraction of draws with `(X^T X theta / n)_j - theta_j > threshold`.
    pub frequency: f64,
    pub mean_deviation: f64,
    /// `p (1 - frequency)`, the constant that makes `1 - C'/p` match.
    pub fitted_c_prime: f64,
}

/// Deviation of `(X^T X theta / n)_coord` from `theta_coord`. Only the columns
/// on the support of `theta` and the column `coord` are generated.
pub fn gram_row_check(
    theta: &TruthVector,
    n: usize,
    coord: usize,
    thresh_c: f64,
    draws: usize,
    rng: &mut RandomStream,
) -> Result<GramRowReport> {
    check_sizes(n, draws)?;
    let p = theta.dim();
    if coord >= p {
        return Err(Error::config("coord", format!("must be below p = {p}")));
    }
    if !(thresh_c < 1.0 && thresh_c.is_finite()) {
        return Err(Error::config("thresh_c", "must be finite and < 1"));
    }
    let mut cols = theta.support.clone();
    if !cols.contains(&coord) {
        cols.push(coord);
    }
    let j_pos = cols.iter().position(|&c| c == coord).expect("coord was inserted");
    let weights: Vec<f64> = cols.iter().map(|&c| theta.theta[c]).collect();
    let target = theta.theta[coord];

    let deviations = parallel_draws(draws, rng, |r| {
        let mut row = vec![0.0; cols.len()];
        let mut acc = 0.0;
        for _ in 0..n {
            r.fill_normal(&mut row);
            let xt: f64 = row.iter().zip(&weights).map(|(x, w)| x * w).sum();
            acc += row[j_pos] * xt;
        }
        acc / n as f64 - target
    });
    let threshold = 0.5 * (thresh_c - 1.0) * ((p as f64).ln() / n as f64).sqrt();
    let frequency = deviations.iter().filter(|&&d| d > threshold).count() as f64 / draws as f64;
    Ok(GramRowReport {
        n,
        p,
        coord,
        thresh_c,
        threshold,
        draws,
        frequency,
        mean_deviation: mean(&deviations),
        fitted_c_prime: p as f64 * (1.0 - frequency),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::variance;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

    fn draws_of(n: usize, count: usize, seed: u64, f: fn(usize, &mut RandomStream) -> f64) -> Vec<f64> {
        let mut rng = RandomStream::from_seed(seed);
        (0..count).map(|_| f(n, &mut rng)).collect()
    }

    #[test]
    fn chi_square_moments() {
        for n in [1usize, 5, 40] {
            let q = draws_of(n, 10_000, n as u64, sample_q);
            let nf = n as f64;
            assert!((mean(&q) - nf).abs() < 3.0 * (2.0 * nf / 10_000.0).sqrt());
            assert!((variance(&q) / (2.0 * nf) - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn single_square_below_one() {
        let q = draws_of(1, 10_000, 11, sample_q);
        let freq = q.iter().filter(|&&x| x <= 1.0).count() as f64 / q.len() as f64;
        let std = Normal::new(0.0, 1.0).unwrap();
        let exact = std.cdf(1.0) - std.cdf(-1.0);
        assert!((exact - 0.6827).abs() < 1e-4);
        assert!((freq - exact).abs() < 3.0 * (exact * (1.0 - exact) / 1e4).sqrt());
    }

    #[test]
    fn product_sum_moments_and_identity() {
        let n = 30;
        let mut rng = RandomStream::from_seed(12);
        let pairs: Vec<(f64, f64)> = (0..10_000).map(|_| sample_z_pair(n, &mut rng)).collect();
        for (a, b) in &pairs {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let z: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        assert!(mean(&z).abs() < 3.0 * (n as f64 / 1e4).sqrt());
        assert!((variance(&z) / n as f64 - 1.0).abs() < 0.1);
    }

    #[test]
    fn samplers_are_deterministic() {
        let a = draws_of(7, 5, 99, sample_z);
        let b = draws_of(7, 5, 99, sample_z);
        assert_eq!(a, b);
    }

    fn grid() -> Vec<f64> {
        (1..=20).map(|t| t as f64).collect()
    }

    #[test]
    fn product_tail_has_exponential_envelope() {
        let rep = z_tail_check(100, &grid(), 20_000, &mut RandomStream::from_seed(13)).unwrap();
        assert!(rep.envelope_holds(), "{rep:?}");
        assert!(rep.empirical_exceed.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.empirical_exceed.iter().all(|e| (0.0..=1.0).contains(e)));
    }

    #[test]
    fn chi_square_tail_has_exponential_envelope() {
        let rep = q_tail_check(100, &grid(), 20_000, &mut RandomStream::from_seed(14)).unwrap();
        assert!(rep.envelope_holds(), "{rep:?}");
        assert_eq!(rep.t_grid.len(), rep.bound_curve.len());
    }

    #[test]
    fn single_column_maximum_is_centred() {
        let rep = max_z_check(50, 1, 1.0, 2000, &mut RandomStream::from_seed(15)).unwrap();
        assert!(rep.mean_max.abs() < 3.0 * (50.0f64 / 2000.0).sqrt());
        assert!(rep.pass);
    }

    #[test]
    fn maximum_within_explicit_constant() {
        let rep = max_z_check(200, 200, 1.0, 500, &mut RandomStream::from_seed(16)).unwrap();
        assert_eq!(rep.bound, 4.0);
        assert!(rep.pass && rep.ratio < 0.75 * rep.bound, "{rep:?}");
    }

    #[test]
    fn maximum_grows_sublinearly_in_p() {
        let small = max_z_check(100, 100, 2.0, 300, &mut RandomStream::from_seed(17)).unwrap();
        let large = max_z_check(100, 200, 2.0, 300, &mut RandomStream::from_seed(18)).unwrap();
        assert!(large.mean_max > small.mean_max);
        assert!(large.mean_max < 2.0 * small.mean_max);
        assert!(large.ratio < 2.0 * small.ratio);
    }

    #[test]
    fn maximum_rejects_wide_designs() {
        assert!(max_z_check(10, 30, 2.0, 10, &mut RandomStream::from_seed(19)).is_err());
    }

    #[test]
    fn gram_row_at_zero_truth() {
        let rep = gram_row_check(&TruthVector::zero(50), 40, 3, 0.8, 200, &mut RandomStream::from_seed(20)).unwrap();
        assert_eq!(rep.frequency, 1.0);
        assert_eq!(rep.mean_deviation, 0.0);
    }

    fn basis(p: usize, j: usize) -> TruthVector {
        let mut v = vec![0.0; p];
        v[j] = 1.0;
        TruthVector::from_vec(v)
    }

    /// For `theta = e_j` the deviation is `chi2_n / n - 1`.
    fn exact_basis_frequency(n: usize, p: usize, c: f64) -> f64 {
        let thr = 0.5 * (c - 1.0) * ((p as f64).ln() / n as f64).sqrt();
        1.0 - ChiSquared::new(n as f64).unwrap().cdf(n as f64 * (1.0 + thr))
    }

    #[test]
    fn gram_row_on_basis_vector_matches_chi_square() {
        let (n, p) = (500, 500);
        for c in [0.8, -2.0] {
            let rep = gram_row_check(&basis(p, 2), n, 2, c, 4000, &mut RandomStream::from_seed(21)).unwrap();
            let exact = exact_basis_frequency(n, p, c);
            let se = (exact * (1.0 - exact) / 4000.0).sqrt();
            assert!((rep.frequency - exact).abs() < 4.0 * se + 1e-3, "c {c}: {} vs {exact}", rep.frequency);
        }
        // the 0.99 level needs a threshold of about -2.3 sd, out of reach for C in (0, 1)
        assert!(exact_basis_frequency(n, p, 0.8) < 0.6);
        assert!(exact_basis_frequency(n, p, -2.0) >= 0.99);
    }

    #[test]
    fn gram_row_frequency_grows_with_n() {
        let p = 400;
        let theta = TruthVector::from_vec({
            let mut v = vec![0.0; p];
            v[0] = 0.6;
            v[1] = -0.5;
            v[2] = 0.3;
            v
        });
        let lo = gram_row_check(&theta, 100, 1, 0.5, 4000, &mut RandomStream::from_seed(22)).unwrap();
        let hi = gram_row_check(&theta, 800, 1, 0.5, 4000, &mut RandomStream::from_seed(23)).unwrap();
        assert!(exact_basis_frequency(800, p, 0.5) >= exact_basis_frequency(100, p, 0.5));
        assert!(hi.frequency + 3.0 * (0.25f64 / 4000.0).sqrt() >= lo.frequency, "{} vs {}", lo.frequency, hi.frequency);
    }
}
