//! Sparse truth vectors, Gaussian-design datasets and sample splitting.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// All problem-level knobs of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub alpha: f64,
    /// Bound on the signal norm, `||theta||_2 <= b`.
    pub b: f64,
    /// Miscoverage level of the confidence set.
    pub beta: f64,
    /// Threshold constant C in `C * sqrt(log p / n)`.
    pub thresh_c: f64,
    /// Sup-norm constant of the pilot estimator, used only for calibration.
    pub cbar: f64,
    pub seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: 400,
            p: 400,
            k: 5,
            alpha: 0.25,
            b: 1.0,
            beta: 0.05,
            thresh_c: 0.8,
            cbar: 3.0,
            seed: 0,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if self.p < 2 {
            return Err(Error::config("p", "must be at least 2"));
        }
        if self.k > self.p {
            return Err(Error::config(
                "k",
                format!("sparsity {} exceeds dimension {}", self.k, self.p),
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be finite and >= 0"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::config("b", "must be finite and > 0"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config("beta", "must lie in (0, 1)"));
        }
        if !(self.thresh_c > 0.0 && self.thresh_c < 1.0) {
            return Err(Error::config("thresh_c", "must lie in (0, 1)"));
        }
        if !(self.cbar > 0.0 && self.cbar.is_finite()) {
            return Err(Error::config("cbar", "must be finite and > 0"));
        }
        Ok(())
    }

    /// `floor(n / (4 log p))`, at least 1.
    pub fn k_max(&self) -> usize {
        ((self.n as f64 / (4.0 * (self.p as f64).ln())).floor() as usize).max(1)
    }

    /// `log p / n`, the scale of every rate in this crate.
    pub fn log_p_over_n(&self) -> f64 {
        (self.p as f64).ln() / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPattern {
    /// Support on the first k coordinates.
    Head,
    /// Support drawn uniformly without replacement.
    RandomSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    /// Every nonzero is `±b/sqrt(k)`, so `||theta||_2 = b`.
    EqualB,
    /// Every nonzero is `±a sqrt(log p / n)`, scaled down if that breaks `||theta||_2 <= b`.
    Snr(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthVector {
    pub theta: Vec<f64>,
    /// Sorted indices of the nonzero coordinates (0-based).
    pub support: Vec<usize>,
    /// Factor applied to an `Snr` signal to respect the norm bound; 1.0 when untouched.
    pub clip_factor: f64,
}

impl TruthVector {
    pub fn zero(p: usize) -> Self {
        Self {
            theta: vec![0.0; p],
            support: Vec::new(),
            clip_factor: 1.0,
        }
    }

    /// Wraps an arbitrary vector; the support is recomputed from the entries.
    pub fn from_vec(theta: Vec<f64>) -> Self {
        let support = theta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        Self {
            theta,
            support,
            clip_factor: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn l2_sq(&self) -> f64 {
        self.support.iter().map(|&j| self.theta[j] * self.theta[j]).sum()
    }

    pub fn was_clipped(&self) -> bool {
        self.clip_factor < 1.0
    }
}

/// Draws a k-sparse truth. Signs alternate along the support, starting positive.
pub fn gen_theta(
    config: &ProblemConfig,
    pattern: SupportPattern,
    magnitude: Magnitude,
    rng: &mut RandomStream,
) -> Result<TruthVector> {
    let ProblemConfig { n, p, k, b, .. } = *config;
    if k > p {
        return Err(Error::config(
            "k",
            format!("sparsity {k} exceeds dimension {p}"),
        ));
    }
    if k == 0 {
        return Ok(TruthVector::zero(p));
    }
    let mut support: Vec<usize> = match pattern {
        SupportPattern::Head => (0..k).collect(),
        SupportPattern::RandomSupport => rand::seq::index::sample(rng.rng_mut(), p, k).into_vec(),
    };
    support.sort_unstable();

    let (level, clip_factor) = match magnitude {
        Magnitude::EqualB => (b / (k as f64).sqrt(), 1.0),
        Magnitude::Snr(a) => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::config("magnitude", "snr multiplier must be finite and > 0"));
            }
            let raw = a * ((p as f64).ln() / n as f64).sqrt();
            let norm = raw * (k as f64).sqrt();
            if norm > b {
                (b / (k as f64).sqrt(), b / norm)
            } else {
                (raw, 1.0)
            }
        }
    };

    let mut theta = vec![0.0; p];
    for (i, &j) in support.iter().enumerate() {
        theta[j] = if i % 2 == 0 { level } else { -level };
    }
    Ok(TruthVector {
        theta,
        support,
        clip_factor,
    })
}

/// Design matrix, response and the truth that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Generating parameter. Only diagnostics may look at it.
    pub truth: TruthVector,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws `n` rows of `Y = X theta + eps` with i.i.d. N(0,1) design and noise.
///
/// The design is drawn first in row-major order, then the noise vector.
pub fn gen_dataset(theta: &TruthVector, n: usize, rng: &mut RandomStream) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let p = theta.dim();
    let mut x = Array2::<f64>::zeros((n, p));
    rng.fill_normal(x.as_slice_mut().expect("fresh array is contiguous"));
    let mut y = Array1::<f64>::zeros(n);
    for (i, yi) in y.iter_mut().enumerate() {
        let row = x.row(i);
        let signal: f64 = theta.support.iter().map(|&j| row[j] * theta.theta[j]).sum();
        *yi = signal + rng.normal();
    }
    Ok(Dataset {
        x,
        y,
        truth: theta.clone(),
    })
}

/// Splits 2n rows into (first n, last n).
pub fn split_sample(d: &Dataset) -> Result<(Dataset, Dataset)> {
    let rows = d.n();
    if rows % 2 != 0 {
        return Err(Error::OddRowCount(rows));
    }
    let half = rows / 2;
    let take = |range: std::ops::Range<usize>| Dataset {
        x: d.x.slice(s![range.clone(), ..]).to_owned(),
        y: d.y.slice(s![range]).to_owned(),
        truth: d.truth.clone(),
    };
    Ok((take(0..half), take(half..rows)))
}
