//! Correlation pilot estimator and its hard-thresholded version.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdedEstimate {
    pub theta_tilde: Vec<f64>,
    pub flags: Vec<bool>,
    pub theta_hat: Vec<f64>,
    pub threshold_value: f64,
}

impl ThresholdedEstimate {
    /// Number of retained coordinates, `sum_j phi_j`.
    pub fn sparsity(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// `X^T Y / n`.
pub fn correlation_estimator(d: &Dataset) -> Vec<f64> {
    let n = d.n();
    let mut acc = vec![0.0; d.p()];
    for (row, &y) in d.x.rows().into_iter().zip(d.y.iter()) {
        for (a, &x) in acc.iter_mut().zip(row.iter()) {
            *a += y * x;
        }
    }
    let inv = 1.0 / n as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// `C sqrt(log p / n)`.
pub fn threshold_value(n: usize, p: usize, c: f64) -> f64 {
    c * ((p as f64).ln() / n as f64).sqrt()
}

/// `phi_j = 1{ |theta_tilde_j| > c sqrt(log p / n) }`.
pub fn threshold_flags(theta_tilde: &[f64], n: usize, p: usize, c: f64) -> Result<Vec<bool>> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::config("thresh_c", "must lie in (0, 1)"));
    }
    if theta_tilde.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            got: theta_tilde.len(),
        });
    }
    let tau = threshold_value(n, p, c);
    Ok(theta_tilde.iter().map(|v| v.abs() > tau).collect())
}

/// Pilot `X^T Y / n` followed by hard thresholding. The flags are computed on
/// the same `X^T Y / n` vector that is thresholded.
pub fn thresholded_estimator(d: &Dataset, c: f64) -> Result<ThresholdedEstimate> {
    let theta_tilde = correlation_estimator(d);
    let flags = threshold_flags(&theta_tilde, d.n(), d.p(), c)?;
    let theta_hat = theta_tilde
        .iter()
        .zip(&flags)
        .map(|(&v, &f)| if f { v } else { 0.0 })
        .collect();
    Ok(ThresholdedEstimate {
        theta_tilde,
        flags,
        theta_hat,
        threshold_value: threshold_value(d.n(), d.p(), c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{magnitude_permutation, permuted_weighted_sq_dist, rank_weights};
    use crate::model::{gen_dataset, gen_theta, Magnitude, ProblemConfig, SupportPattern, TruthVector};
    use crate::numeric::{mean, std_error};
    use crate::rng::RandomStream;
    use ndarray::{Array1, Array2};

    #[test]
    fn zero_response_gives_zero_estimate() {
        let d = Dataset {
            x: Array2::from_elem((3, 4), 1.5),
            y: Array1::zeros(3),
            truth: TruthVector::zero(4),
        };
        assert_eq!(correlation_estimator(&d), vec![0.0; 4]);
    }

    #[test]
    fn single_row_of_ones() {
        let d = Dataset {
            x: Array2::ones((1, 5)),
            y: Array1::from(vec![2.5]),
            truth: TruthVector::zero(5),
        };
        assert_eq!(correlation_estimator(&d), vec![2.5; 5]);
    }

    #[test]
    fn threshold_arithmetic() {
        let (n, p) = (400, 400);
        let scale = ((p as f64).ln() / n as f64).sqrt();
        let mut tt = vec![0.0; p];
        tt[3] = 0.9 * scale;
        tt[7] = -0.79 * scale;
        let flags = threshold_flags(&tt, n, p, 0.8).unwrap();
        assert!(flags[3]);
        assert!(!flags[7]);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(threshold_flags(&vec![0.0; p], n, p, 0.8)
            .unwrap()
            .iter()
            .all(|&f| !f));
    }

    #[test]
    fn threshold_constant_out_of_range() {
        assert!(threshold_flags(&[0.0; 3], 10, 3, 1.0).is_err());
        assert!(threshold_flags(&[0.0; 3], 10, 3, 0.0).is_err());
    }

    #[test]
    fn correlation_estimator_is_unbiased() {
        let theta = TruthVector::from_vec(vec![0.6, 0.0, -0.3, 0.0, 0.1]);
        let reps = 2000;
        let draws: Vec<Vec<f64>> = (0..reps)
            .map(|r| {
                let mut rng = RandomStream::substream(21, &[r]);
                correlation_estimator(&gen_dataset(&theta, 30, &mut rng).unwrap())
            })
            .collect();
        for j in 0..5 {
            let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let (m, se) = (mean(&col), std_error(&col));
            assert!(
                (m - theta.theta[j]).abs() < 3.0 * se,
                "coordinate {j}: mean {m}, se {se}"
            );
        }
    }

    #[test]
    fn estimate_is_exactly_sparse() {
        let cfg = ProblemConfig { n: 200, p: 200, k: 5, ..ProblemConfig::default() };
        let mut rng = RandomStream::from_seed(4);
        let theta = gen_theta(&cfg, SupportPattern::Head, Magnitude::Snr(4.0), &mut rng).unwrap();
        let est = thresholded_estimator(&gen_dataset(&theta, 200, &mut rng).unwrap(), 0.8).unwrap();
        let nnz = est.theta_hat.iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nnz, est.sparsity());
        for j in 0..200 {
            assert_eq!(est.flags[j], est.theta_tilde[j].abs() > est.threshold_value);
        }
    }

    #[test]
    fn null_false_flag_rate() {
        // Under theta = 0 each (X^T Y / n)_j is close to N(0, 1/n), so the
        // per-coordinate flag rate is near 2 (1 - Phi(0.8 sqrt(log 500))) ~ 0.046.
        let cfg = ProblemConfig { n: 500, p: 500, k: 0, ..ProblemConfig::default() };
        let theta = TruthVector::zero(cfg.p);
        let reps = 500;
        let counts: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = RandomStream::substream(33, &[r]);
                let d = gen_dataset(&theta, cfg.n, &mut rng).unwrap();
                thresholded_estimator(&d, 0.8).unwrap().sparsity() as f64
            })
            .collect();
        let rate = mean(&counts) / cfg.p as f64;
        eprintln!("null false-flag rate at n=p=500, C=0.8: {rate:.4}");
        assert!(rate > 0.03 && rate < 0.07, "rate {rate}");
    }

    #[test]
    fn strong_signals_are_all_flagged() {
        let cfg = ProblemConfig { n: 500, p: 500, k: 5, ..ProblemConfig::default() };
        let reps = 500;
        let hits = (0..reps)
            .filter(|&r| {
                let mut rng = RandomStream::substream(34, &[r]);
                let theta =
                    gen_theta(&cfg, SupportPattern::RandomSupport, Magnitude::Snr(4.0), &mut rng)
                        .unwrap();
                let d = gen_dataset(&theta, cfg.n, &mut rng).unwrap();
                let est = thresholded_estimator(&d, 0.8).unwrap();
                theta.support.iter().all(|&j| est.flags[j])
            })
            .count();
        assert!(hits as f64 >= 0.95 * reps as f64, "hits {hits}/{reps}");
    }

    #[test]
    fn scaled_error_does_not_grow_with_sparsity() {
        let alpha = 0.25;
        let (n, p) = (400, 400);
        let w = rank_weights(alpha, p);
        let reps = 40;
        let scaled: Vec<f64> = [2usize, 4, 8, 16]
            .iter()
            .map(|&k| {
                let cfg = ProblemConfig { n, p, k, ..ProblemConfig::default() };
                let errs: Vec<f64> = (0..reps)
                    .map(|r| {
                        let mut rng = RandomStream::substream(35, &[k as u64, r]);
                        let theta =
                            gen_theta(&cfg, SupportPattern::Head, Magnitude::EqualB, &mut rng)
                                .unwrap();
                        let d = gen_dataset(&theta, n, &mut rng).unwrap();
                        let est = thresholded_estimator(&d, 0.8).unwrap();
                        (0..p)
                            .map(|j| w[j] * (est.theta_hat[j] - theta.theta[j]).powi(2))
                            .sum::<f64>()
                    })
                    .collect();
                mean(&errs) * n as f64 / ((k as f64).powf(1.0 - 2.0 * alpha) * (p as f64).ln())
            })
            .collect();
        eprintln!("scaled weighted error over k = 2,4,8,16: {scaled:?}");
        assert!(scaled.iter().all(|s| s.is_finite()));
        assert!(scaled[3] <= 2.0 * scaled[0]);
    }

    #[test]
    fn permuted_error_never_exceeds_rearrangement_maximum() {
        let alpha = 0.25;
        let cfg = ProblemConfig { n: 300, p: 300, k: 6, ..ProblemConfig::default() };
        let mut rng = RandomStream::from_seed(36);
        let theta = gen_theta(&cfg, SupportPattern::Head, Magnitude::Snr(4.0), &mut rng).unwrap();
        let d = gen_dataset(&theta, cfg.n, &mut rng).unwrap();
        let est = thresholded_estimator(&d, 0.8).unwrap();
        let err: Vec<f64> = est
            .theta_hat
            .iter()
            .zip(&theta.theta)
            .map(|(a, b)| a - b)
            .collect();
        let zeros = vec![0.0; cfg.p];
        let worst = permuted_weighted_sq_dist(&err, &zeros, &magnitude_permutation(&err), alpha)
            .unwrap();
        for _ in 0..20 {
            let mut order: Vec<usize> = (0..cfg.p).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng.rng_mut());
            let perm = crate::geometry::Permutation::from_order(order).unwrap();
            let v = permuted_weighted_sq_dist(&err, &zeros, &perm, alpha).unwrap();
            assert!(v <= worst * (1.0 + 1e-12));
        }
    }
}
