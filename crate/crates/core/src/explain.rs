//! Local surrogate explanations of a feature-based scorer.
//!
//! Each feature is cut into quartile bins fitted on training rows. Around the
//! instance, samples resample every feature's bin uniformly, reconstruct a raw
//! value uniformly inside the sampled bin, and record which features kept the
//! instance's bin. A weighted ridge regression from those indicators to the
//! model's scores gives one signed weight per feature.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{HandCraftedVector, FEATURE_NAMES, N_FEATURES};
use crate::sim::Scorer;
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub n_samples: usize,
    /// Entries reported, strongest first.
    pub num_features: usize,
    /// Defaults to `0.75 * sqrt(p)`.
    pub kernel_width: Option<f64>,
    pub ridge_alpha: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            n_samples: 1000,
            num_features: N_FEATURES,
            kernel_width: None,
            ridge_alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Defective,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub feature: String,
    pub condition: String,
    pub weight: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Model score on the instance itself.
    pub prediction: f64,
    pub intercept: f64,
    /// Weighted R² of the surrogate on the perturbation sample.
    pub fidelity: f64,
    pub entries: Vec<ExplanationEntry>,
}

impl Explanation {
    pub fn weight_of(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.weight)
    }

    pub fn to_table(&self) -> String {
        let width = self.entries.iter().map(|e| e.condition.len()).max().unwrap_or(0).max(9);
        let mut s = format!(
            "prediction {:.4}  intercept {:.4}  fidelity {:.4}\n",
            self.prediction, self.intercept, self.fidelity
        );
        let _ = writeln!(s, "{:<width$}  {:>9}  direction", "condition", "weight");
        for e in &self.entries {
            let dir = match e.direction {
                Direction::Defective => "defective",
                Direction::Clean => "clean",
            };
            let _ = writeln!(s, "{:<width$}  {:>9.4}  {dir}", e.condition, e.weight);
        }
        s
    }
}

/// Linear-interpolated percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartile bins of one feature.
#[derive(Debug, Clone, PartialEq)]
struct Bins {
    /// Distinct inner boundaries, ascending.
    cuts: Vec<f64>,
    min: f64,
    max: f64,
}

impl Bins {
    fn fit(values: &mut [f64]) -> Bins {
        values.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&q| percentile(values, q)).collect();
        cuts.dedup();
        let max = values[values.len() - 1];
        // A cut at the maximum would leave an empty top bin.
        cuts.retain(|&c| c < max);
        Bins {
            cuts,
            min: values[0],
            max,
        }
    }

    fn count(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Values equal to a cut fall in the lower bin.
    fn bin_of(&self, v: f64) -> usize {
        self.cuts.iter().filter(|&&c| c < v).count()
    }

    fn range(&self, b: usize) -> (f64, f64) {
        let lo = if b == 0 { self.min } else { self.cuts[b - 1] };
        let hi = if b == self.cuts.len() { self.max } else { self.cuts[b] };
        (lo, hi.max(lo))
    }

    fn condition(&self, name: &str, b: usize) -> String {
        let k = self.cuts.len();
        if k == 0 {
            return format!("{name} = {:.2}", self.min);
        }
        match b {
            0 => format!("{name} <= {:.2}", self.cuts[0]),
            b if b == k => format!("{name} > {:.2}", self.cuts[k - 1]),
            b => format!("{:.2} < {name} <= {:.2}", self.cuts[b - 1], self.cuts[b]),
        }
    }
}

/// Explains `model`'s score on `x` with a local linear surrogate.
pub fn explain_instance<S: Scorer + ?Sized>(
    model: &S,
    x: &HandCraftedVector,
    training: &[HandCraftedVector],
    config: &ExplainConfig,
    seed: u64,
) -> Result<Explanation> {
    if training.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if config.n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two perturbation samples".into()));
    }
    let rows: Vec<[f64; N_FEATURES]> = training.iter().map(HandCraftedVector::to_array).collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training feature value".into()));
    }
    let instance = x.to_array();
    if instance.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("instance feature value".into()));
    }
    let bins: Vec<Bins> = (0..N_FEATURES)
        .map(|j| Bins::fit(&mut rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let home: Vec<usize> = bins.iter().zip(&instance).map(|(b, &v)| b.bin_of(v)).collect();

    let mut rng = rng_for(seed, 0);
    let n = config.n_samples;
    let mut z = DMatrix::<f64>::zeros(n, N_FEATURES);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let width = config.kernel_width.unwrap_or(0.75 * (N_FEATURES as f64).sqrt());
    let prediction = model.score(&instance)?;
    for i in 0..n {
        let mut raw = instance;
        let mut off = 0usize;
        for j in 0..N_FEATURES {
            let keep = if i == 0 {
                true
            } else {
                let b = rng.gen_range(0..bins[j].count());
                let (lo, hi) = bins[j].range(b);
                raw[j] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                b == home[j]
            };
            z[(i, j)] = f64::from(u8::from(keep));
            off += usize::from(!keep);
        }
        y[i] = if i == 0 { prediction } else { model.score(&raw)? };
        let d2 = off as f64;
        w[i] = (-d2 / (width * width)).exp().sqrt();
    }

    let (coef, intercept) = weighted_ridge(&z, &y, &w, config.ridge_alpha)?;
    let fitted = &z * &coef + DVector::from_element(n, intercept);
    let fidelity = weighted_r2(&y, &fitted, &w);

    let mut order: Vec<usize> = (0..N_FEATURES).collect();
    order.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
    let entries = order
        .into_iter()
        .take(config.num_features)
        .map(|j| ExplanationEntry {
            feature: FEATURE_NAMES[j].to_string(),
            condition: bins[j].condition(FEATURE_NAMES[j], home[j]),
            weight: coef[j],
            direction: if coef[j] > 0.0 { Direction::Defective } else { Direction::Clean },
        })
        .collect();
    Ok(Explanation {
        prediction,
        intercept,
        fidelity,
        entries,
    })
}

/// Ridge with an unpenalized intercept, minimizing
/// `sum w_i (y_i - b - z_i . beta)^2 + alpha |beta|^2`.
fn weighted_ridge(z: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, alpha: f64) -> Result<(DVector<f64>, f64)> {
    let total = w.sum();
    let z_mean = z.transpose() * w / total;
    let y_mean = y.dot(w) / total;
    let mut zc = z.clone();
    for mut row in zc.row_iter_mut() {
        row -= z_mean.transpose();
    }
    let yc = y.add_scalar(-y_mean);
    let zw = DMatrix::from_fn(zc.nrows(), zc.ncols(), |i, j| zc[(i, j)] * w[i]);
    let a = zw.transpose() * &zc + DMatrix::identity(zc.ncols(), zc.ncols()) * alpha;
    let b = zw.transpose() * yc;
    let coef = a
        .cholesky()
        .ok_or_else(|| Error::NonFinite("surrogate system is not positive definite".into()))?
        .solve(&b);
    let intercept = y_mean - coef.dot(&z_mean);
    Ok((coef, intercept))
}

/// Weighted coefficient of determination; 0 when the target is constant.
fn weighted_r2(y: &DVector<f64>, fitted: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mean = y.dot(w) / w.sum();
    let ss_tot: f64 = y.iter().zip(w.iter()).map(|(v, wi)| wi * (v - mean).powi(2)).sum();
    if ss_tot <= f64::EPSILON * w.sum() {
        return 0.0;
    }
    let ss_res: f64 = y.iter().zip(fitted.iter()).zip(w.iter()).map(|((v, f), wi)| wi * (v - f).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
