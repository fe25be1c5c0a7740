use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LateStrategy {
    SimpleAverage,
    WeightedAverage,
    GeometricAverage,
    None,
}

impl LateStrategy {
    pub const ALL: [LateStrategy; 4] = [
        LateStrategy::SimpleAverage,
        LateStrategy::WeightedAverage,
        LateStrategy::GeometricAverage,
        LateStrategy::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LateStrategy::SimpleAverage => "SimpleAverage",
            LateStrategy::WeightedAverage => "WeightedAverage",
            LateStrategy::GeometricAverage => "GeometricAverage",
            LateStrategy::None => "None",
        }
    }
}

impl fmt::Display for LateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LateStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LateStrategy::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateFusionRule {
    pub strategy: LateStrategy,
    /// Per-model weights, used by the weighted rule only.
    #[serde(default)]
    pub weights: Vec<f64>,
}

impl LateFusionRule {
    pub fn new(strategy: LateStrategy) -> Self {
        LateFusionRule {
            strategy,
            weights: Vec::new(),
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        LateFusionRule {
            strategy: LateStrategy::WeightedAverage,
            weights,
        }
    }
}

/// Smallest score the geometric rule lets into its product.
pub const GEOMETRIC_FLOOR: f64 = 1e-12;

/// Combines one commit's per-model defect probabilities.
///
/// ```
/// use simcom::fusion::{late_fuse, LateFusionRule, LateStrategy};
/// let simple = LateFusionRule::new(LateStrategy::SimpleAverage);
/// assert_eq!(late_fuse(&simple, &[0.2, 0.8]).unwrap(), 0.5);
/// let weighted = LateFusionRule::weighted(vec![3.0, 1.0]);
/// assert!((late_fuse(&weighted, &[0.2, 0.8]).unwrap() - 0.35).abs() < 1e-12);
/// ```
pub fn late_fuse(rule: &LateFusionRule, scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("late fusion needs at least one score".into()));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
    }
    let n = scores.len() as f64;
    match rule.strategy {
        LateStrategy::SimpleAverage => Ok(scores.iter().sum::<f64>() / n),
        LateStrategy::WeightedAverage => {
            if rule.weights.len() != scores.len() {
                return Err(Error::dim(scores.len(), rule.weights.len(), "late fusion weights"));
            }
            if rule.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(Error::InvalidArgument("late fusion weights must be positive".into()));
            }
            let total: f64 = rule.weights.iter().sum();
            Ok(scores.iter().zip(&rule.weights).map(|(s, w)| s * w).sum::<f64>() / total)
        }
        LateStrategy::GeometricAverage => {
            let log_mean = scores.iter().map(|s| s.max(GEOMETRIC_FLOOR).ln()).sum::<f64>() / n;
            Ok(log_mean.exp().min(1.0))
        }
        LateStrategy::None => match scores {
            [s] => Ok(*s),
            _ => Err(Error::InvalidArgument(format!(
                "late fusion None takes exactly one score, got {}",
                scores.len()
            ))),
        },
    }
}

/// Weight vectors on the simplex with step 0.1 and every weight at least
/// 0.1, in lexicographic order of their tenths.
pub fn weight_grid(n: usize) -> Vec<Vec<f64>> {
    fn go(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / 10.0).collect());
            cur.pop();
            return;
        }
        for k in 1..=left - (slots - 1) {
            cur.push(k);
            go(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if (1..=10).contains(&n) {
        go(10, n, &mut Vec::new(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        let g = LateFusionRule::new(LateStrategy::GeometricAverage);
        assert!((late_fuse(&g, &[0.5, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(late_fuse(&g, &[0.0, 0.9]).unwrap() > 0.0);
        let none = LateFusionRule::new(LateStrategy::None);
        assert_eq!(late_fuse(&none, &[0.7]).unwrap(), 0.7);
        assert!(late_fuse(&none, &[0.7, 0.1]).is_err());
        assert!(late_fuse(&LateFusionRule::new(LateStrategy::SimpleAverage), &[]).is_err());
        assert!(late_fuse(&LateFusionRule::weighted(vec![1.0, 0.0]), &[0.2, 0.3]).is_err());
        assert!(late_fuse(&LateFusionRule::weighted(vec![1.0]), &[0.2, 0.3]).is_err());
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(weight_grid(2).len(), 9);
        assert_eq!(weight_grid(3).len(), 36);
        assert_eq!(weight_grid(3)[0], vec![0.1, 0.1, 0.8]);
        for w in weight_grid(3) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tags_round_trip() {
        for l in LateStrategy::ALL {
            assert_eq!(l.as_str().parse::<LateStrategy>().unwrap(), l);
        }
    }
}
