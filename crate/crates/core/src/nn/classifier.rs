use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{matvec, matvec_backward, relu, Parameters, Tensor};

/// Clean/defective probabilities; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub clean: f64,
    pub defective: f64,
}

/// Loss weight per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub clean: f64,
    pub defective: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            clean: 1.0,
            defective: 1.0,
        }
    }
}

impl ClassWeights {
    /// Defective weight = #clean / #defective.
    pub fn balanced(labels: &[u8]) -> Self {
        let pos = labels.iter().filter(|&&l| l == 1).count();
        let neg = labels.len() - pos;
        ClassWeights {
            clean: 1.0,
            defective: if pos == 0 { 1.0 } else { neg as f64 / pos as f64 },
        }
    }

    fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.defective
        } else {
            self.clean
        }
    }
}

pub fn softmax2(logits: [f64; 2]) -> ScorePair {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    ScorePair {
        clean: a / (a + b),
        defective: b / (a + b),
    }
}

/// Weighted cross-entropy of two logits against `label`; returns the loss and
/// its gradient with respect to the logits.
pub fn cross_entropy(logits: [f64; 2], label: u8, weights: ClassWeights) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    let w = weights.of(label);
    let y = label.min(1) as usize;
    let p = softmax2(logits);
    let probs = [p.clean, p.defective];
    let mut grad = [w * probs[0], w * probs[1]];
    grad[y] -= w;
    (w * (lse - logits[y]), grad)
}

/// `hidden = ReLU(W_h z + b_h)`, `logits = W_o hidden + b_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub w_hidden: Tensor,
    pub b_hidden: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    pub logits: [f64; 2],
}

impl Classifier {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Classifier {
            w_hidden: Tensor::glorot(&[hidden, in_dim], in_dim, hidden, rng),
            b_hidden: Tensor::zeros(&[hidden]),
            w_out: Tensor::glorot(&[2, hidden], hidden, 2, rng),
            b_out: Tensor::zeros(&[2]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_hidden.shape()[1]
    }

    pub fn forward(&self, z: &[f64]) -> (ScorePair, ClassifierCache) {
        let hidden: Vec<f64> = matvec(&self.w_hidden, z)
            .into_iter()
            .zip(self.b_hidden.data())
            .map(|(a, b)| relu(a + b))
            .collect();
        let o = matvec(&self.w_out, &hidden);
        let logits = [o[0] + self.b_out.data()[0], o[1] + self.b_out.data()[1]];
        (
            softmax2(logits),
            ClassifierCache {
                input: z.to_vec(),
                hidden,
                logits,
            },
        )
    }

    /// Returns the gradient with respect to the input vector.
    pub fn backward(&self, cache: &ClassifierCache, dlogits: [f64; 2], grads: &mut Classifier) -> Vec<f64> {
        for (g, d) in grads.b_out.data_mut().iter_mut().zip(dlogits) {
            *g += d;
        }
        let mut dh = matvec_backward(&self.w_out, &cache.hidden, &dlogits, &mut grads.w_out);
        for (d, h) in dh.iter_mut().zip(&cache.hidden) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        for (g, d) in grads.b_hidden.data_mut().iter_mut().zip(&dh) {
            *g += d;
        }
        matvec_backward(&self.w_hidden, &cache.input, &dh, &mut grads.w_hidden)
    }
}

impl Parameters for Classifier {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("hidden.weight".into(), &self.w_hidden),
            ("hidden.bias".into(), &self.b_hidden),
            ("out.weight".into(), &self.w_out),
            ("out.bias".into(), &self.b_out),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("hidden.weight".into(), &mut self.w_hidden),
            ("hidden.bias".into(), &mut self.b_hidden),
            ("out.weight".into(), &mut self.w_out),
            ("out.bias".into(), &mut self.b_out),
        ]
    }
}
