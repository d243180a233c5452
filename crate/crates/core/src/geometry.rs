//! Weighted `l2^{-alpha}` norms and magnitude-ordered distances.
//!
//! Coordinates are 0-based throughout; the weight of rank position `j`
//! (0-based) is `(j + 1)^{-2 alpha}`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A bijection on `0..p`, stored as `order[rank] = coordinate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(p: usize) -> Self {
        Self {
            order: (0..p).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &j in &order {
            if j >= order.len() {
                return Err(Error::InvalidPermutation(format!(
                    "index {j} out of range for length {}",
                    order.len()
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidPermutation(format!("index {j} repeated")));
            }
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(r, &j)| r == j)
    }

    /// `rank[coordinate]`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.order.len()];
        for (r, &j) in self.order.iter().enumerate() {
            rank[j] = r;
        }
        rank
    }
}

/// `w_j = j^{-2 alpha}` for `j = 1..p`.
pub fn rank_weights(alpha: f64, p: usize) -> Vec<f64> {
    (1..=p).map(|j| (j as f64).powf(-2.0 * alpha)).collect()
}

/// Exponent, precomputed rank weights and an optional ordering.
#[derive(Debug, Clone)]
pub struct WeightedGeometry {
    alpha: f64,
    weights: Arc<[f64]>,
    perm: Option<Permutation>,
}

impl WeightedGeometry {
    pub fn new(alpha: f64, p: usize) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::config("alpha", "must be finite and >= 0"));
        }
        Ok(Self {
            alpha,
            weights: rank_weights(alpha, p).into(),
            perm: None,
        })
    }

    /// Same weights, coordinates ranked by `perm`. Shares the weight table.
    pub fn with_perm(&self, perm: Permutation) -> Result<Self> {
        if perm.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                got: perm.len(),
            });
        }
        Ok(Self {
            alpha: self.alpha,
            weights: Arc::clone(&self.weights),
            perm: Some(perm),
        })
    }

    /// Drops the ordering, keeping the shared weight table.
    pub fn unordered(&self) -> Self {
        Self {
            alpha: self.alpha,
            weights: Arc::clone(&self.weights),
            perm: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn perm(&self) -> Option<&Permutation> {
        self.perm.as_ref()
    }

    pub fn is_ordered(&self) -> bool {
        self.perm.is_some()
    }

    /// Weight carried by each coordinate: `w[rank(j)]`, or `w[j]` when unordered.
    pub fn coordinate_weights(&self) -> Vec<f64> {
        match &self.perm {
            None => self.weights.to_vec(),
            Some(perm) => {
                let mut cw = vec![0.0; self.weights.len()];
                for (r, &j) in perm.order().iter().enumerate() {
                    cw[j] = self.weights[r];
                }
                cw
            }
        }
    }

    /// Squared distance between `a` and `b` in this geometry.
    pub fn sq_dist(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let acc: CompensatedSum = match &self.perm {
            None => self
                .weights
                .iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| w * (x - y) * (x - y))
                .collect(),
            Some(perm) => self
                .weights
                .iter()
                .zip(perm.order())
                .map(|(w, &j)| w * (a[j] - b[j]) * (a[j] - b[j]))
                .collect(),
        };
        Ok(acc.value())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                got,
            });
        }
        Ok(())
    }
}

/// `sum_j w_j v_j^2` in an unordered geometry.
pub fn weighted_sq_norm(v: &[f64], geom: &WeightedGeometry) -> Result<f64> {
    if geom.is_ordered() {
        return Err(Error::OrderedGeometry);
    }
    geom.check_len(v.len())?;
    Ok(geom
        .weights()
        .iter()
        .zip(v)
        .map(|(w, x)| w * x * x)
        .collect::<CompensatedSum>()
        .value())
}

/// Coordinates sorted by decreasing `|v_j|`; ties go to the smaller index.
pub fn magnitude_permutation(v: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable sort keeps index order among equal magnitudes
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    Permutation { order }
}

/// `sum_j j^{-2 alpha} (a_{perm[j]} - b_{perm[j]})^2`.
pub fn permuted_weighted_sq_dist(
    a: &[f64],
    b: &[f64],
    perm: &Permutation,
    alpha: f64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if perm.len() != a.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: perm.len(),
        });
    }
    Ok(perm
        .order()
        .iter()
        .enumerate()
        .map(|(r, &j)| ((r + 1) as f64).powf(-2.0 * alpha) * (a[j] - b[j]) * (a[j] - b[j]))
        .collect::<CompensatedSum>()
        .value())
}
