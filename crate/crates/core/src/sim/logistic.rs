use serde::{Deserialize, Serialize};

use super::{check_training_data, Scorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 penalty on the weights; the intercept is not penalized.
    pub lambda: f64,
    /// Convergence threshold on the gradient norm of the per-row objective.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1.0,
            tolerance: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Logistic regression over a masked subset of the features. Inputs are
/// standardized with the training mean and deviation before the dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub mask: Vec<bool>,
    /// One weight per feature in standardized units; masked-out entries are 0.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearModel {
    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mask)
            .zip(self.mean.iter().zip(&self.std))
            .map(|((v, m), (mu, sd))| if *m && *sd > 0.0 { (v - mu) / sd } else { 0.0 })
            .collect()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mask.len() {
            return Err(Error::dim(self.mask.len(), x.len(), "linear model input"));
        }
        let z = self.standardized(x);
        Ok(self.intercept + z.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.decision(x).map(sigmoid)
    }
}

impl Scorer for LinearModel {
    fn score(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }
}

/// Maximizes `Σ log-likelihood − λ/2 ‖w‖²` by Nesterov-accelerated gradient
/// ascent with a fixed step from a curvature bound, restarting momentum
/// whenever the objective drops.
pub fn train_logistic(x: &[Vec<f64>], y: &[u8], mask: &[bool], config: &LogisticConfig) -> Result<LinearModel> {
    let p = check_training_data(x, y)?;
    if mask.len() != p {
        return Err(Error::dim(p, mask.len(), "feature mask"));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("feature mask selects nothing".into()));
    }
    let n = x.len() as f64;
    let mut mean = vec![0.0; p];
    let mut std = vec![0.0; p];
    for j in 0..p {
        mean[j] = x.iter().map(|r| r[j]).sum::<f64>() / n;
        std[j] = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
    }
    let mut model = LinearModel {
        mask: mask.to_vec(),
        weights: vec![0.0; p],
        intercept: 0.0,
        mean,
        std,
        iterations: 0,
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardized(r)).collect();
    let active: Vec<usize> = (0..p).filter(|&j| mask[j] && model.std[j] > 0.0).collect();

    // Parameter vector: intercept then active weights. Objective and
    // gradient are divided by n.
    let dim = active.len() + 1;
    let lam = config.lambda / n;
    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; dim];
        let mut obj = 0.0;
        for (row, &label) in z.iter().zip(y) {
            let s = theta[0] + active.iter().enumerate().map(|(k, &j)| theta[k + 1] * row[j]).sum::<f64>();
            let t = f64::from(label);
            // log σ(s) and log(1 − σ(s)) without overflow.
            obj += t * s - s.max(0.0) - (-s.abs()).exp().ln_1p();
            let r = t - sigmoid(s);
            grad[0] += r;
            for (k, &j) in active.iter().enumerate() {
                grad[k + 1] += r * row[j];
            }
        }
        obj /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        for k in 1..dim {
            obj -= 0.5 * lam * theta[k] * theta[k];
            grad[k] -= lam * theta[k];
        }
        (obj, grad)
    };
    // Curvature of the mean log-likelihood is at most ¼ of the largest
    // eigenvalue of the design Gram matrix, bounded by its trace.
    let trace = 1.0 + active.len() as f64;
    let step = 1.0 / (0.25 * trace + lam);

    let mut theta = vec![0.0; dim];
    let mut prev = theta.clone();
    let mut momentum_k = 0usize;
    let (mut last_obj, _) = eval(&theta);
    let mut grad_norm = f64::INFINITY;
    for it in 0..config.max_iter {
        let beta = momentum_k as f64 / (momentum_k as f64 + 3.0);
        let look: Vec<f64> = theta.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let (_, g) = eval(&look);
        let next: Vec<f64> = look.iter().zip(&g).map(|(a, gi)| a + step * gi).collect();
        let (obj, g_next) = eval(&next);
        grad_norm = g_next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !obj.is_finite() {
            return Err(Error::NonFinite("logistic objective".into()));
        }
        if obj < last_obj {
            momentum_k = 0;
        } else {
            momentum_k += 1;
        }
        prev = std::mem::replace(&mut theta, next);
        last_obj = obj;
        model.iterations = it + 1;
        if grad_norm < config.tolerance {
            model.intercept = theta[0];
            for (k, &j) in active.iter().enumerate() {
                model.weights[j] = theta[k + 1];
            }
            return Ok(model);
        }
    }
    Err(Error::NonConvergence { grad_norm })
}
