//! Weighted U-statistic risk estimate.
//!
//! For a point `v`,
//!
//! ```text
//! U(v) = 2 / (n (n-1)) * sum_j w_j sum_{l<m} (Y_l X_lj - v_j)(Y_m X_mj - v_j)
//! ```
//!
//! is unbiased for `sum_j w_j (theta_j - v_j)^2`. The fast kernel uses
//! `sum_{l<m} z_l z_m = (s^2 - q) / 2` with `s = sum_l z_l`, `q = sum_l z_l^2`,
//! which costs one pass over the data. When the geometry carries a
//! permutation, coordinate `perm[r]` receives weight `w_r`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::WeightedGeometry;
use crate::model::Dataset;
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UStatReport {
    pub u_value: f64,
    pub n: usize,
    pub alpha: f64,
    pub at_point: Vec<f64>,
}

fn check_inputs(d: &Dataset, point: &[f64], geom: &WeightedGeometry) -> Result<()> {
    if d.n() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: d.n() });
    }
    for got in [point.len(), geom.p()] {
        if got != d.p() {
            return Err(Error::LengthMismatch { expected: d.p(), got });
        }
    }
    Ok(())
}

/// Per-coordinate `(s_j, q_j)` sums of `z_lj = Y_l X_lj - point_j`.
fn centred_sums(d: &Dataset, point: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = d.p();
    let mut s = vec![0.0; p];
    let mut q = vec![0.0; p];
    for (row, &y) in d.x.rows().into_iter().zip(d.y.iter()) {
        let row = row.to_slice().expect("dataset rows are contiguous");
        for j in 0..p {
            let z = y * row[j] - point[j];
            s[j] += z;
            q[j] += z * z;
        }
    }
    (s, q)
}

/// Fast O(np) evaluation; returns the bare value.
pub fn u_stat_value(d: &Dataset, point: &[f64], geom: &WeightedGeometry) -> Result<f64> {
    check_inputs(d, point, geom)?;
    let n = d.n() as f64;
    let (s, q) = centred_sums(d, point);
    let cw = geom.coordinate_weights();
    let total: CompensatedSum = cw
        .iter()
        .zip(s.iter().zip(&q))
        .map(|(w, (s, q))| w * (s * s - q))
        .collect();
    Ok(total.value() / (n * (n - 1.0)))
}

pub fn u_stat(d: &Dataset, point: &[f64], geom: &WeightedGeometry) -> Result<UStatReport> {
    Ok(UStatReport {
        u_value: u_stat_value(d, point, geom)?,
        n: d.n(),
        alpha: geom.alpha(),
        at_point: point.to_vec(),
    })
}

/// Literal pairwise triple sum, O(n^2 p). Test oracle; keep n small.
pub fn u_stat_bruteforce(d: &Dataset, point: &[f64], geom: &WeightedGeometry) -> Result<f64> {
    check_inputs(d, point, geom)?;
    let n = d.n();
    let identity: Vec<usize> = (0..d.p()).collect();
    let order = geom.perm().map(|p| p.order()).unwrap_or(&identity);
    let mut total = 0.0;
    for (rank, &j) in order.iter().enumerate() {
        let w = geom.weights()[rank];
        for l in 1..n {
            for m in 0..l {
                total += w
                    * (d.y[l] * d.x[[l, j]] - point[j])
                    * (d.y[m] * d.x[[m, j]] - point[j]);
            }
        }
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// Quantities that need the true parameter. Confidence-set code never calls these.
pub mod diagnostics {
    use super::*;
    use crate::model::TruthVector;

    #[derive(Debug, Clone, Copy, PartialEq, Serialize)]
    pub struct DecompositionReport {
        pub u_at_hat: f64,
        pub u_at_truth: f64,
        pub linear_term: f64,
        pub sq_dist: f64,
        /// `u_at_hat - u_at_truth - 2 linear_term - sq_dist`.
        pub residual: f64,
    }

    impl DecompositionReport {
        pub fn within_tolerance(&self) -> bool {
            self.residual.abs() <= 1e-8 * (1.0 + self.u_at_hat.abs())
        }
    }

    /// `L(hat) = (1/n) sum_i sum_j w_j (Y_i X_ij - theta_j)(theta_j - hat_j)`.
    ///
    /// With this orientation `U(hat) = U(theta) + 2 L(hat) + ||hat - theta||^2`
    /// holds exactly.
    pub fn linear_term(
        d: &Dataset,
        truth: &TruthVector,
        hat: &[f64],
        geom: &WeightedGeometry,
    ) -> Result<f64> {
        check_inputs(d, hat, geom)?;
        if truth.dim() != d.p() {
            return Err(Error::LengthMismatch { expected: d.p(), got: truth.dim() });
        }
        let theta = &truth.theta;
        let (s, _) = centred_sums(d, theta);
        let cw = geom.coordinate_weights();
        let total: CompensatedSum = (0..d.p())
            .map(|j| cw[j] * s[j] * (theta[j] - hat[j]))
            .collect();
        Ok(total.value() / d.n() as f64)
    }

    pub fn hoeffding_residual(
        d: &Dataset,
        truth: &TruthVector,
        hat: &[f64],
        geom: &WeightedGeometry,
    ) -> Result<DecompositionReport> {
        let u_at_hat = u_stat_value(d, hat, geom)?;
        let u_at_truth = u_stat_value(d, &truth.theta, geom)?;
        let linear_term = linear_term(d, truth, hat, geom)?;
        let sq_dist = geom.sq_dist(hat, &truth.theta)?;
        Ok(DecompositionReport {
            u_at_hat,
            u_at_truth,
            linear_term,
            sq_dist,
            residual: u_at_hat - u_at_truth - 2.0 * linear_term - sq_dist,
        })
    }
}
