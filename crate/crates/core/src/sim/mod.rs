//! The expert-feature models: a random forest over the fourteen change
//! metrics, and logistic regression restricted by a feature mask (all
//! features for LR-JIT, `la` alone for LApredict).

mod forest;
mod logistic;

use crate::corpus::undersample;
use crate::error::{Error, Result};
use crate::features::{HandCraftedVector, LA, N_FEATURES};

pub use forest::{train_forest, ForestConfig, ForestModel, Node, Tree};
pub use logistic::{train_logistic, LinearModel, LogisticConfig};

/// Anything that maps a raw feature row to a defect probability.
pub trait Scorer: Sync {
    fn score(&self, x: &[f64]) -> Result<f64>;

    fn score_vector(&self, v: &HandCraftedVector) -> Result<f64> {
        self.score(&v.to_array())
    }
}

impl<F> Scorer for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

pub fn lr_jit_mask() -> Vec<bool> {
    vec![true; N_FEATURES]
}

pub fn lapredict_mask() -> Vec<bool> {
    (0..N_FEATURES).map(|i| i == LA).collect()
}

/// Validates a design matrix and returns its width.
pub(crate) fn check_training_data(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::dim(x.len(), y.len(), "rows and labels"));
    }
    let p = x.first().map(Vec::len).ok_or(Error::EmptySplit("train"))?;
    if p == 0 {
        return Err(Error::InvalidArgument("rows have no features".into()));
    }
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::dim(p, r.len(), "feature row"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature value".into()));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass("training labels contain one class".into()));
    }
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::InsufficientData("need at least two rows per class".into()));
    }
    Ok(p)
}

/// Sim: undersample the training rows to balance the classes, then fit the
/// forest.
pub fn train_sim(rows: &[HandCraftedVector], labels: &[u8], config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    let kept = undersample(labels, seed)?;
    let x: Vec<Vec<f64>> = kept.iter().map(|&i| rows[i].to_array().to_vec()).collect();
    let y: Vec<u8> = kept.iter().map(|&i| labels[i]).collect();
    train_forest(&x, &y, config, seed)
}
