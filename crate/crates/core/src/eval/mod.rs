//! Ranking and threshold metrics, significance statistics, and the overlap
//! and correction analyses used to compare two models.

mod analysis;
mod stats;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng_for;

pub use analysis::{correction_analysis, overlap_analysis, CorrectionReport, OverlapReport};
pub use stats::{cliffs_delta, correctness_indicators, wilcoxon_signed_rank, Magnitude, Wilcoxon};

/// Decision threshold: a score strictly above it is defective.
pub const THRESHOLD: f64 = 0.5;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(a, b, "scores and labels"));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
///
/// ```
/// use simcom::eval::roc_auc;
/// let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
/// assert!((auc - 0.75).abs() < 1e-12);
/// ```
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("AUC-ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision with tied scores grouped into a single step.
///
/// ```
/// use simcom::eval::pr_auc;
/// let ap = pr_auc(&[0.9, 0.8, 0.7], &[1, 0, 1]).unwrap();
/// assert!((ap - 5.0 / 6.0).abs() < 1e-12);
/// ```
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(Error::SingleClass("AUC-PR needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        if recall > prev_recall {
            ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
            prev_recall = recall;
        }
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl Confusion {
    pub fn prf1(self) -> Prf1 {
        let Confusion { tp, fp, fn_, .. } = self;
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf1 {
            precision,
            recall,
            f1,
            confusion: self,
        }
    }
}

pub fn classify(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

pub fn prf1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Prf1> {
    check_lengths(scores.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c.prf1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: f64,
}

impl MetricReport {
    pub fn compute(scores: &[f64], labels: &[u8]) -> Result<Self> {
        let p = prf1(scores, labels, THRESHOLD)?;
        Ok(MetricReport {
            auc_roc: roc_auc(scores, labels)?,
            auc_pr: pr_auc(scores, labels)?,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            tp: p.confusion.tp,
            fp: p.confusion.fp,
            tn: p.confusion.tn,
            fn_: p.confusion.fn_,
            threshold: THRESHOLD,
        })
    }

    /// Mean of AUC-ROC, AUC-PR and F1, the checkpoint-selection target.
    pub fn selection_score(&self) -> f64 {
        (self.auc_roc + self.auc_pr + self.f1) / 3.0
    }

    pub const CSV_HEADER: &'static str = "auc_roc,auc_pr,precision,recall,f1,tp,fp,tn,fn,threshold";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.auc_roc,
            self.auc_pr,
            self.precision,
            self.recall,
            self.f1,
            self.tp,
            self.fp,
            self.tn,
            self.fn_,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSamples {
    /// Indices of each group, in shuffled order.
    pub groups: Vec<Vec<usize>>,
    pub auc_roc: Vec<f64>,
    pub auc_pr: Vec<f64>,
}

pub const GROUP_RETRIES: usize = 100;

/// Splits the instances into `k` random near-equal groups, each holding both
/// classes, and computes AUC-ROC and AUC-PR per group.
pub fn group_metric_samples(scores: &[f64], labels: &[u8], k: usize, seed: u64) -> Result<GroupSamples> {
    check_lengths(scores.len(), labels.len())?;
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidArgument(format!("cannot split {} items into {k} groups", scores.len())));
    }
    let mut rng = rng_for(seed, 0);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let (base, extra) = (scores.len() / k, scores.len() % k);
    for _ in 0..GROUP_RETRIES {
        idx.shuffle(&mut rng);
        let mut groups = Vec::with_capacity(k);
        let mut start = 0;
        for g in 0..k {
            let len = base + usize::from(g < extra);
            groups.push(idx[start..start + len].to_vec());
            start += len;
        }
        let mixed = groups.iter().all(|g| {
            let pos = g.iter().filter(|&&i| labels[i] == 1).count();
            pos > 0 && pos < g.len()
        });
        if !mixed {
            continue;
        }
        let mut out = GroupSamples {
            groups,
            auc_roc: Vec::with_capacity(k),
            auc_pr: Vec::with_capacity(k),
        };
        for g in &out.groups {
            let s: Vec<f64> = g.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = g.iter().map(|&i| labels[i]).collect();
            out.auc_roc.push(roc_auc(&s, &l)?);
            out.auc_pr.push(pr_auc(&s, &l)?);
        }
        return Ok(out);
    }
    Err(Error::InsufficientData(format!(
        "no partition into {k} groups with both classes after {GROUP_RETRIES} attempts"
    )))
}
