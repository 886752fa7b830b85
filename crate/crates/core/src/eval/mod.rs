//! Evaluation of embeddings: Vendi diversity, a multinomial logistic linear
//! probe, and spectral clustering.

mod cluster;
mod probe;
mod vendi;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{adjusted_rand_index, kmeans, spectral_cluster, ClusterConfig, ClusterResult};
pub use probe::{
    fit_logistic, linear_probe, linear_probe_grouped, ClassMetrics, LogisticFit, MeanStd, ProbeMetrics,
    ProbeReport,
};
pub use vendi::{vendi_score, VendiKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("row {row} is all zeros; cosine similarity is undefined")]
    ZeroRow { row: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenSolverFailure,

    #[error("only one class present; a probe needs at least two")]
    SingleClass,

    #[error("class {class} has {count} member(s); at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("cannot form {k} clusters from {m} rows (need m > k >= 2)")]
    InvalidClusterCount { k: usize, m: usize },

    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),

    #[error("empty input")]
    Empty,
}

/// How the probe splits rows into train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Per-class shuffles so every class appears on both sides.
    #[default]
    Stratified,
    /// Whole groups (e.g. donors or sections) are held out together.
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// z-score features with statistics fit on the training split.
    pub standardize: bool,
    pub train_fraction: f64,
    pub l2_penalty: f64,
    pub max_iterations: usize,
    /// Relative objective decrease below which the solver stops.
    pub tolerance: f64,
    pub seeds: Vec<u64>,
    pub split: SplitStrategy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            standardize: true,
            train_fraction: 0.8,
            l2_penalty: 1e-2,
            max_iterations: 500,
            tolerance: 1e-8,
            seeds: vec![0, 1, 2, 3, 4],
            split: SplitStrategy::Stratified,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_owned()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be nonnegative");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        Ok(())
    }
}

/// Per-column mean and standard deviation (population).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(x.ncols());
        for row in x.rows() {
            for ((v, &xi), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - mu) * (xi - mu);
            }
        }
        // Constant columns are centered but left unscaled.
        let scale = var.mapv(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        });
        Self { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, &mu), &sd) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / sd;
            }
        }
        out
    }
}

/// z-scores every column of `x` using its own statistics.
pub fn standardize_columns(x: ArrayView2<'_, f64>) -> Array2<f64> {
    Standardizer::fit(x).transform(x)
}
