use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BUNDLE_NAME;
use crate::error::Result;
use crate::eval::{
    classify, cliffs_delta, correction_analysis, correctness_indicators, group_metric_samples, overlap_analysis,
    CorrectionReport, GroupSamples, Magnitude, OverlapReport, Wilcoxon, THRESHOLD,
};

/// Sim against Com, and the bundle's corrections over each of them.
pub(crate) fn overlap_and_correction(
    scores: &BTreeMap<String, Vec<f64>>,
    labels: &[u8],
) -> Result<(BTreeMap<String, OverlapReport>, BTreeMap<String, CorrectionReport>)> {
    let classes = |m: &str| classify(&scores[m], THRESHOLD);
    let mut overlap = BTreeMap::new();
    overlap.insert("sim_vs_com".to_string(), overlap_analysis(&classes("sim"), &classes("com"), labels)?);
    let fused = classes(BUNDLE_NAME);
    let mut correction = BTreeMap::new();
    for m in ["sim", "com"] {
        correction.insert(format!("{BUNDLE_NAME}_vs_{m}"), correction_analysis(&fused, &classes(m), labels)?);
    }
    Ok((overlap, correction))
}

/// A paired test and effect size, or why they could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatOutcome {
    pub wilcoxon: Option<Wilcoxon>,
    pub cliffs_delta: Option<f64>,
    pub magnitude: Option<Magnitude>,
    pub errors: Vec<String>,
}

impl StatOutcome {
    fn of(a: &[f64], b: &[f64]) -> Self {
        let mut errors = Vec::new();
        let wilcoxon = crate::eval::wilcoxon_signed_rank(a, b)
            .map_err(|e| errors.push(format!("wilcoxon: {e}")))
            .ok();
        let delta = cliffs_delta(a, b).map_err(|e| errors.push(format!("cliffs_delta: {e}"))).ok();
        StatOutcome {
            wilcoxon,
            cliffs_delta: delta.map(|d| d.0),
            magnitude: delta.map(|d| d.1),
            errors,
        }
    }

    fn failed(reason: String) -> Self {
        StatOutcome {
            wilcoxon: None,
            cliffs_delta: None,
            magnitude: None,
            errors: vec![reason],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    /// Bundle against `model` on per-group AUC-ROC.
    pub auc_roc: StatOutcome,
    pub auc_pr: StatOutcome,
    /// Bundle against `model` on per-commit correctness at the 0.5 cut.
    pub correctness: StatOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub reference: String,
    pub groups: usize,
    pub comparisons: Vec<Comparison>,
}

/// Compares the bundle with every other model. Groups come from one shared
/// partition, so per-group metrics pair up across models.
pub(crate) fn significance(
    scores: &BTreeMap<String, Vec<f64>>,
    labels: &[u8],
    groups: usize,
    seed: u64,
) -> SignificanceReport {
    let samples: BTreeMap<&str, std::result::Result<GroupSamples, String>> = scores
        .iter()
        .map(|(m, s)| (m.as_str(), group_metric_samples(s, labels, groups, seed).map_err(|e| e.to_string())))
        .collect();
    let reference = &samples[BUNDLE_NAME];
    let fused_ok = correctness_indicators(&classify(&scores[BUNDLE_NAME], THRESHOLD), labels);
    let comparisons = scores
        .iter()
        .filter(|(m, _)| m.as_str() != BUNDLE_NAME)
        .map(|(m, s)| {
            let (auc_roc, auc_pr) = match (reference, &samples[m.as_str()]) {
                (Ok(r), Ok(o)) => (StatOutcome::of(&r.auc_roc, &o.auc_roc), StatOutcome::of(&r.auc_pr, &o.auc_pr)),
                (Err(e), _) | (_, Err(e)) => (
                    StatOutcome::failed(format!("grouping: {e}")),
                    StatOutcome::failed(format!("grouping: {e}")),
                ),
            };
            let ok = correctness_indicators(&classify(s, THRESHOLD), labels);
            Comparison {
                model: m.clone(),
                auc_roc,
                auc_pr,
                correctness: StatOutcome::of(&fused_ok, &ok),
            }
        })
        .collect();
    SignificanceReport {
        reference: BUNDLE_NAME.to_string(),
        groups,
        comparisons,
    }
}
