//! The content model: a hierarchical textCNN over the commit message and the
//! per-file change documents, trained with class-weighted cross-entropy and
//! per-epoch checkpoint selection on validation metrics.

mod model;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::fusion::EarlyStrategy;
use crate::nn::{cross_entropy, Adam, AdamConfig, ClassWeights, Parameters};
use crate::text::TextShape;
use crate::util::rng_for;

pub use model::{DeepCache, DeepModel, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComConfig {
    pub embed_dim: usize,
    /// Filters per textCNN, split evenly over the window sizes.
    pub filters: usize,
    pub windows: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shape: TextShape,
    /// Vocabulary size including the reserved entries.
    pub vocab_size: usize,
    pub min_frequency: usize,
    /// AMF projection width; defaults to the content-vector width.
    pub fusion_dim: Option<usize>,
    pub gmf_beta: f64,
}

impl Default for ComConfig {
    fn default() -> Self {
        ComConfig::full()
    }
}

impl ComConfig {
    /// Full-size settings: 64-d embeddings, 64 filters, 512 hidden units,
    /// learning rate 5e-5, batch 64, 30 epochs, dropout 0.5.
    pub fn full() -> Self {
        ComConfig {
            embed_dim: 64,
            filters: 64,
            windows: vec![1, 2, 3],
            hidden: 512,
            dropout: 0.5,
            lr: 5e-5,
            batch_size: 64,
            epochs: 30,
            shape: TextShape::default(),
            vocab_size: 10_000,
            min_frequency: 1,
            fusion_dim: None,
            gmf_beta: 1.0,
        }
    }

    /// Desk-scale settings for tests and synthetic corpora.
    pub fn micro() -> Self {
        ComConfig {
            embed_dim: 8,
            filters: 8,
            hidden: 32,
            lr: 2e-3,
            batch_size: 32,
            epochs: 12,
            shape: TextShape::micro(),
            vocab_size: 2_000,
            ..ComConfig::full()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.embed_dim == 0 || self.filters < self.windows.len() || self.windows.is_empty() {
            return bad("textCNN needs a positive width and at least one filter per window");
        }
        if self.windows.contains(&0) {
            return bad("window sizes must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 {
            return bad("batch size, epochs and hidden units must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc_roc: f64,
    pub val_auc_pr: f64,
    pub val_f1: f64,
    pub val_mean: f64,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub strategy: EarlyStrategy,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the returned checkpoint.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_auc_roc,val_auc_pr,val_f1,val_mean,checkpoint,selected\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_auc_roc,
                e.val_auc_pr,
                e.val_f1,
                e.val_mean,
                e.checkpoint,
                u8::from(e.epoch == self.best_epoch)
            );
        }
        s
    }
}

fn labels(examples: &[Example]) -> Vec<u8> {
    examples.iter().map(|e| e.label).collect()
}

/// Contiguous sub-batches per gradient computation. Fixed so the floating
/// point summation order does not depend on the thread count.
const GRAD_SHARDS: usize = 8;

/// Mean loss and gradient over a batch.
fn batch_gradient(
    model: &DeepModel,
    batch: &[(&Example, u64)],
    weights: ClassWeights,
) -> Result<(f64, DeepModel)> {
    let shard = batch.len().div_ceil(GRAD_SHARDS).max(1);
    let parts: Vec<(f64, DeepModel)> = batch
        .par_chunks(shard)
        .map(|part| {
            let mut g = model.zeros_like();
            let mut loss = 0.0;
            for (ex, seed) in part {
                let (_, cache) = model.forward_mode(&ex.encoded, Some(&ex.features), true, *seed)?;
                let (l, dlogits) = cross_entropy(cache.logits(), ex.label, weights);
                model.backward(&cache, dlogits, &mut g);
                loss += l;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut total) = parts.next().expect("batch is non-empty");
    for (l, g) in parts {
        loss += l;
        total.accumulate(&g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Trains `model` in place from its current parameters and returns the
/// epoch checkpoint with the best mean of validation AUC-ROC, AUC-PR and F1.
pub fn train_deep(
    mut model: DeepModel,
    train: &[Example],
    validation: &[Example],
    config: &ComConfig,
    seed: u64,
) -> Result<(DeepModel, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let train_labels = labels(train);
    let val_labels = labels(validation);
    let weights = ClassWeights::balanced(&train_labels);
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog {
        strategy: model.strategy(),
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, DeepModel)> = None;

    for epoch in 1..=config.epochs {
        let mut rng = rng_for(seed, 1_000 + epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&Example, u64)> = chunk.iter().map(|&i| (&train[i], rng.gen())).collect();
            let fail = |reason: String| Error::Training {
                epoch,
                batch: b + 1,
                reason,
            };
            let (loss, grads) = batch_gradient(&model, &batch, weights).map_err(|e| fail(e.to_string()))?;
            if !loss.is_finite() {
                return Err(fail(format!("non-finite loss {loss}")));
            }
            adam.step(&mut model, &grads).map_err(|e| fail(e.to_string()))?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let scores = model.predict_all(validation)?;
        let report = MetricReport::compute(&scores, &val_labels)?;
        let mean = report.selection_score();
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_auc_roc: report.auc_roc,
            val_auc_pr: report.auc_pr,
            val_f1: report.f1,
            val_mean: mean,
            checkpoint: format!("epoch-{epoch:03}"),
        });
        if best.as_ref().is_none_or(|(m, _)| mean > *m) {
            best = Some((mean, model.clone()));
            log.best_epoch = epoch;
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, log))
}

/// Trains the content-only model.
pub fn train_com(
    train: &[Example],
    validation: &[Example],
    vocab_size: usize,
    config: &ComConfig,
    seed: u64,
) -> Result<(DeepModel, TrainLog)> {
    config.validate()?;
    let model = DeepModel::new(config, vocab_size, EarlyStrategy::None, seed);
    train_deep(model, train, validation, config, seed)
}

/// Trains the content model with `strategy` fusing in the hand-crafted
/// features ahead of the classifier.
pub fn train_early_fused(
    strategy: EarlyStrategy,
    train: &[Example],
    validation: &[Example],
    vocab_size: usize,
    config: &ComConfig,
    seed: u64,
) -> Result<(DeepModel, TrainLog)> {
    config.validate()?;
    let model = DeepModel::new(config, vocab_size, strategy, seed);
    train_deep(model, train, validation, config, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lr: f64,
    pub batch_size: usize,
    pub val_mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub lr: f64,
    pub batch_size: usize,
    pub cells: Vec<GridCell>,
}

/// Learning rates and batch sizes searched by default.
pub const LR_GRID: [f64; 4] = [1e-5, 5e-5, 1e-4, 2e-4];
pub const BATCH_GRID: [usize; 4] = [16, 32, 64, 128];

/// Trains one content model per (learning rate, batch size) cell and returns
/// the cell with the best validation metric mean. Ties go to the lower
/// learning rate, then the smaller batch. Failing cells are recorded and
/// skipped.
pub fn grid_search(
    lrs: &[f64],
    batch_sizes: &[usize],
    train: &[Example],
    validation: &[Example],
    vocab_size: usize,
    base: &ComConfig,
    seed: u64,
) -> Result<GridResult> {
    if lrs.is_empty() || batch_sizes.is_empty() {
        return Err(Error::InvalidArgument("grid search needs non-empty grids".into()));
    }
    let mut lrs = lrs.to_vec();
    lrs.sort_by(f64::total_cmp);
    let mut batches = batch_sizes.to_vec();
    batches.sort_unstable();
    let mut cells = Vec::new();
    let mut best: Option<(f64, f64, usize)> = None;
    for &lr in &lrs {
        for &batch_size in &batches {
            let config = ComConfig {
                lr,
                batch_size,
                ..base.clone()
            };
            match train_com(train, validation, vocab_size, &config, seed) {
                Ok((_, log)) => {
                    let m = log.best().val_mean;
                    if best.is_none_or(|(b, _, _)| m > b) {
                        best = Some((m, lr, batch_size));
                    }
                    cells.push(GridCell {
                        lr,
                        batch_size,
                        val_mean: Some(m),
                        error: None,
                    });
                }
                Err(e) => cells.push(GridCell {
                    lr,
                    batch_size,
                    val_mean: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let (_, lr, batch_size) = best.ok_or_else(|| Error::Training {
        epoch: 0,
        batch: 0,
        reason: "every grid cell failed".into(),
    })?;
    Ok(GridResult { lr, batch_size, cells })
}
