use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Agreement between two models' positive predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub common_tp: usize,
    pub unique_tp_a: usize,
    pub unique_tp_b: usize,
    pub common_fp: usize,
    pub unique_fp_a: usize,
    pub unique_fp_b: usize,
    /// Unique true positives over the model's total true positives.
    pub unique_tp_ratio_a: f64,
    pub unique_tp_ratio_b: f64,
    pub unique_fp_ratio_a: f64,
    pub unique_fp_ratio_b: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check3(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(a, b, "prediction vectors"));
    }
    if a != c {
        return Err(Error::dim(a, c, "predictions and labels"));
    }
    Ok(())
}

pub fn overlap_analysis(classes_a: &[u8], classes_b: &[u8], labels: &[u8]) -> Result<OverlapReport> {
    check3(classes_a.len(), classes_b.len(), labels.len())?;
    let mut r = OverlapReport {
        common_tp: 0,
        unique_tp_a: 0,
        unique_tp_b: 0,
        common_fp: 0,
        unique_fp_a: 0,
        unique_fp_b: 0,
        unique_tp_ratio_a: 0.0,
        unique_tp_ratio_b: 0.0,
        unique_fp_ratio_a: 0.0,
        unique_fp_ratio_b: 0.0,
    };
    for ((&a, &b), &l) in classes_a.iter().zip(classes_b).zip(labels) {
        let (common, ua, ub) = if l == 1 {
            (&mut r.common_tp, &mut r.unique_tp_a, &mut r.unique_tp_b)
        } else {
            (&mut r.common_fp, &mut r.unique_fp_a, &mut r.unique_fp_b)
        };
        match (a == 1, b == 1) {
            (true, true) => *common += 1,
            (true, false) => *ua += 1,
            (false, true) => *ub += 1,
            (false, false) => {}
        }
    }
    r.unique_tp_ratio_a = ratio(r.unique_tp_a, r.common_tp + r.unique_tp_a);
    r.unique_tp_ratio_b = ratio(r.unique_tp_b, r.common_tp + r.unique_tp_b);
    r.unique_fp_ratio_a = ratio(r.unique_fp_a, r.common_fp + r.unique_fp_a);
    r.unique_fp_ratio_b = ratio(r.unique_fp_b, r.common_fp + r.unique_fp_b);
    Ok(r)
}

/// How a fused model's predictions differ from one of its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub different: usize,
    pub wrong_to_correct: usize,
    pub correct_to_wrong: usize,
    pub net_correction: i64,
    /// Net correction over differing predictions; 0 when nothing differs.
    pub net_correction_ratio: f64,
}

impl CorrectionReport {
    /// Derives the net figures from raw counts. With binary labels the two
    /// transition counts add up to `different`; published tables do not
    /// always satisfy that, so it is not enforced here.
    pub fn from_counts(different: usize, wrong_to_correct: usize, correct_to_wrong: usize) -> Self {
        let net = wrong_to_correct as i64 - correct_to_wrong as i64;
        CorrectionReport {
            different,
            wrong_to_correct,
            correct_to_wrong,
            net_correction: net,
            net_correction_ratio: if different == 0 { 0.0 } else { net as f64 / different as f64 },
        }
    }
}

pub fn correction_analysis(fused: &[u8], component: &[u8], labels: &[u8]) -> Result<CorrectionReport> {
    check3(fused.len(), component.len(), labels.len())?;
    let (mut diff, mut w2c, mut c2w) = (0, 0, 0);
    for ((&f, &c), &l) in fused.iter().zip(component).zip(labels) {
        if f == c {
            continue;
        }
        diff += 1;
        if f == l {
            w2c += 1;
        } else if c == l {
            c2w += 1;
        }
    }
    Ok(CorrectionReport::from_counts(diff, w2c, c2w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_set_algebra() {
        // Positives at 1..=4; A predicts {1,2,3}, B predicts {2,3,4}.
        let labels = [0, 1, 1, 1, 1, 0];
        let a = [0, 1, 1, 1, 0, 1];
        let b = [0, 0, 1, 1, 1, 1];
        let r = overlap_analysis(&a, &b, &labels).unwrap();
        assert_eq!((r.common_tp, r.unique_tp_a, r.unique_tp_b), (2, 1, 1));
        assert_eq!((r.common_fp, r.unique_fp_a, r.unique_fp_b), (1, 0, 0));
        assert!(overlap_analysis(&a, &b[..3], &labels).is_err());
    }

    #[test]
    fn identical_predictions_have_no_corrections() {
        let r = correction_analysis(&[1, 0, 1], &[1, 0, 1], &[1, 1, 0]).unwrap();
        assert_eq!(r, CorrectionReport::from_counts(0, 0, 0));
        assert_eq!(r.net_correction_ratio, 0.0);
    }
}
