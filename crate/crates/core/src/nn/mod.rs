//! Small self-contained neural building blocks with hand-written backward
//! passes: textCNN feature extractors, a two-layer classifier head, dropout,
//! Adam, a finite-difference gradient checker and a checkpoint format.
//!
//! Every parameterized block implements [`Parameters`], which exposes its
//! tensors by name in a fixed order. Gradients are stored in a value of the
//! same type (see [`Parameters::zeros_like`]), which is what lets [`Adam`]
//! and [`finite_diff_check`] work on any model.

mod adam;
mod checkpoint;
mod classifier;
mod dropout;
mod gradcheck;
mod textcnn;

use rand::Rng;

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, manifest, restore, save_checkpoint};
pub use classifier::{cross_entropy, softmax2, ClassWeights, Classifier, ClassifierCache, ScorePair};
pub use dropout::{dropout, dropout_mask};
pub use gradcheck::{finite_diff_check, GradCheck};
pub use textcnn::{CnnCache, CnnInput, ConvBank, TextCnn};

/// Dense row-major f64 array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(n, data.len(), "tensor data length"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform in ±√(6 / (fan_in + fan_out)).
    pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-limit..=limit)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A set of named tensors in a fixed order.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.data_mut().iter_mut().zip(s.data()) {
                *d += v;
            }
        }
    }
}

/// Row-major matrix-vector product for a `[rows, cols]` tensor.
pub(crate) fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.shape[1];
    debug_assert_eq!(cols, x.len());
    w.data
        .chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Accumulates `dW += dy ⊗ x` and returns `Wᵀ dy`.
pub(crate) fn matvec_backward(w: &Tensor, x: &[f64], dy: &[f64], dw: &mut Tensor) -> Vec<f64> {
    let cols = w.shape[1];
    let mut dx = vec![0.0; cols];
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w.data[r * cols..(r + 1) * cols];
        let drow = &mut dw.data[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += g * x[c];
            dx[c] += g * row[c];
        }
    }
    dx
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_for;

    #[test]
    fn tensor_shape_checked() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(matvec(&t, &[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
    }

    #[test]
    fn glorot_bounds() {
        let t = Tensor::glorot(&[10, 20], 20, 10, &mut rng_for(1, 0));
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= lim));
    }
}
