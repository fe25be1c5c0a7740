use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{late_fuse, weight_grid, EarlyStrategy, LateFusionRule, LateStrategy};
use crate::error::{Error, Result};
use crate::eval::MetricReport;

/// One evaluated (early, late) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub early: EarlyStrategy,
    pub rule: LateFusionRule,
    pub val_auc_roc: f64,
    pub val_auc_pr: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// Index of the chosen cell.
    pub best: usize,
}

impl SweepResult {
    pub fn chosen(&self) -> &SweepCell {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("early_strategy,late_rule,weights,val_auc_roc,val_auc_pr,val_f1\n");
        for c in &self.cells {
            let w: Vec<String> = c.rule.weights.iter().map(|w| w.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.early,
                c.rule.strategy,
                w.join(";"),
                c.val_auc_roc,
                c.val_auc_pr,
                c.val_f1
            );
        }
        s
    }
}

/// Validation scores of the component models.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    pub sim: Vec<f64>,
    pub com: Vec<f64>,
    /// One entry per trained early-fused model.
    pub early: BTreeMap<EarlyStrategy, Vec<f64>>,
}

impl ComponentScores {
    /// Score columns fused for an early strategy: Sim, Com and, unless the
    /// strategy is `None`, the early-fused model.
    fn members(&self, early: EarlyStrategy) -> Option<Vec<&[f64]>> {
        let mut m: Vec<&[f64]> = vec![&self.sim, &self.com];
        if early != EarlyStrategy::None {
            m.push(self.early.get(&early)?);
        }
        Some(m)
    }

    /// The single model a `None` late rule keeps.
    fn lone(&self, early: EarlyStrategy) -> Option<&[f64]> {
        match early {
            EarlyStrategy::None => Some(&self.com),
            e => self.early.get(&e).map(Vec::as_slice),
        }
    }
}

/// Fused scores of one combination, row by row.
pub fn fuse_columns(rule: &LateFusionRule, columns: &[&[f64]]) -> Result<Vec<f64>> {
    let n = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::dim(n, c.len(), "component score columns"));
    }
    (0..n)
        .map(|i| {
            let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            late_fuse(rule, &row)
        })
        .collect()
}

fn evaluate(rule: &LateFusionRule, columns: &[&[f64]], labels: &[u8]) -> Result<MetricReport> {
    MetricReport::compute(&fuse_columns(rule, columns)?, labels)
}

/// Evaluates every early × late combination on validation data and picks
/// the highest AUC-PR, keeping the first of equal cells. Early strategies
/// are visited SC, TC, AMF, GMF, None and late rules simple, weighted,
/// geometric, None; strategies without a trained model are skipped.
pub fn sweep_combinations(scores: &ComponentScores, labels: &[u8]) -> Result<SweepResult> {
    if labels.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let mut cells = Vec::new();
    for early in EarlyStrategy::ALL {
        let Some(members) = scores.members(early) else {
            continue;
        };
        for late in LateStrategy::ALL {
            let (rule, report) = match late {
                LateStrategy::None => {
                    let lone = scores.lone(early).expect("members exist");
                    let rule = LateFusionRule::new(late);
                    let r = evaluate(&rule, &[lone], labels)?;
                    (rule, r)
                }
                LateStrategy::WeightedAverage => {
                    let mut best: Option<(LateFusionRule, MetricReport)> = None;
                    for w in weight_grid(members.len()) {
                        let rule = LateFusionRule::weighted(w);
                        let r = evaluate(&rule, &members, labels)?;
                        if best.as_ref().is_none_or(|(_, b)| r.auc_pr > b.auc_pr) {
                            best = Some((rule, r));
                        }
                    }
                    best.expect("weight grid is non-empty")
                }
                _ => {
                    let rule = LateFusionRule::new(late);
                    let r = evaluate(&rule, &members, labels)?;
                    (rule, r)
                }
            };
            cells.push(SweepCell {
                early,
                rule,
                val_auc_roc: report.auc_roc,
                val_auc_pr: report.auc_pr,
                val_f1: report.f1,
            });
        }
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.val_auc_pr > cells[best].val_auc_pr {
            best = i;
        }
    }
    Ok(SweepResult { cells, best })
}
