//! Adaptive confidence sets for sparse Gaussian-design regression measured in
//! weighted, optionally rank-ordered, l2 losses.
//!
//! The pipeline is: draw a sparse truth and a dataset ([`model`]), split it,
//! build a thresholded pilot estimate on one half ([`estimator`]), estimate its
//! weighted risk with a U-statistic on the other half ([`ustat`]), and turn that
//! into a ball ([`confset`]). [`priors`] and [`concentration`] hold the
//! lower-bound and tail-bound experiments, [`harness`] drives everything at
//! scale, and [`cli`] is the command-line front end.

pub mod cli;
pub mod concentration;
pub mod confset;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod priors;
pub mod rng;
pub mod ustat;

pub use error::{Error, Result};
pub use estimator::{thresholded_estimator, ThresholdedEstimate};
pub use geometry::{magnitude_permutation, Permutation, WeightedGeometry};
pub use model::{gen_dataset, gen_theta, Dataset, Magnitude, ProblemConfig, SupportPattern, TruthVector};
pub use rng::RandomStream;
pub use ustat::{u_stat, u_stat_value, UStatReport};
