use rand::Rng;
use rayon::prelude::*;

use super::ComConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSplit;
use crate::fusion::{EarlyFusion, EarlyStrategy, FusionCache};
use crate::nn::{dropout_mask, Classifier, ClassifierCache, CnnCache, CnnInput, Parameters, ScorePair, Tensor, TextCnn};
use crate::text::EncodedCommit;
use crate::util::rng_for;

/// One commit ready for the deep models.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub encoded: EncodedCommit,
    pub features: FeatureSplit,
    pub label: u8,
}

/// Hierarchical textCNN over the message and per-file change documents,
/// optionally fused with the hand-crafted features before the classifier.
/// With [`EarlyFusion::None`] this is the plain content model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    pub message: TextCnn,
    pub file: TextCnn,
    pub aggregate: TextCnn,
    pub fusion: EarlyFusion,
    pub head: Classifier,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct DeepCache {
    pub z_m: Vec<f64>,
    pub z_c: Vec<f64>,
    msg: CnnCache,
    files: Vec<CnnCache>,
    agg: CnnCache,
    fusion: FusionCache,
    mask: Option<Vec<f64>>,
    head: ClassifierCache,
}

impl DeepCache {
    pub fn logits(&self) -> [f64; 2] {
        self.head.logits
    }
}

impl DeepModel {
    pub fn new(config: &ComConfig, vocab_size: usize, strategy: EarlyStrategy, seed: u64) -> Self {
        let mut rng = rng_for(seed, 100);
        let f = config.filters;
        let message = TextCnn::new(Some(vocab_size), config.embed_dim, &config.windows, f, &mut rng);
        let file = TextCnn::new(Some(vocab_size), config.embed_dim, &config.windows, f, &mut rng);
        let aggregate = TextCnn::new(None, file.out_dim(), &config.windows, f, &mut rng);
        let dz = message.out_dim() + aggregate.out_dim();
        let d_f = config.fusion_dim.unwrap_or(dz);
        let fusion = EarlyFusion::new(strategy, dz, d_f, config.gmf_beta, &mut rng);
        let head = Classifier::new(fusion.out_dim(dz), config.hidden, &mut rng);
        DeepModel {
            message,
            file,
            aggregate,
            fusion,
            head,
            dropout: config.dropout,
        }
    }

    pub fn strategy(&self) -> EarlyStrategy {
        self.fusion.strategy()
    }

    pub fn content_dim(&self) -> usize {
        self.message.out_dim() + self.aggregate.out_dim()
    }

    pub fn forward(
        &self,
        input: &EncodedCommit,
        features: Option<&FeatureSplit>,
        mask: Option<Vec<f64>>,
    ) -> Result<(ScorePair, DeepCache)> {
        let (z_m, msg) = self.message.forward(CnnInput::Tokens(&input.message))?;
        let mut rows = Vec::with_capacity(input.files.len());
        let mut files = Vec::with_capacity(input.files.len());
        for f in &input.files {
            let (v, c) = self.file.forward(CnnInput::Tokens(f))?;
            rows.push(v);
            files.push(c);
        }
        if rows.is_empty() {
            return Err(Error::dim(1, 0, "file rows"));
        }
        let (z_c, agg) = self.aggregate.forward(CnnInput::Vectors(&rows))?;
        let z: Vec<f64> = z_m.iter().chain(&z_c).copied().collect();
        let (mut c, fusion) = self.fusion.forward(&z, features)?;
        if c.len() != self.head.in_dim() {
            return Err(Error::dim(self.head.in_dim(), c.len(), "classifier input"));
        }
        if let Some(m) = &mask {
            c.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        let (p, head) = self.head.forward(&c);
        Ok((
            p,
            DeepCache {
                z_m,
                z_c,
                msg,
                files,
                agg,
                fusion,
                mask,
                head,
            },
        ))
    }

    /// Forward pass with dropout drawn from `seed` when `training` is set.
    pub fn forward_mode(
        &self,
        input: &EncodedCommit,
        features: Option<&FeatureSplit>,
        training: bool,
        seed: u64,
    ) -> Result<(ScorePair, DeepCache)> {
        let mask = (training && self.dropout > 0.0).then(|| {
            let dim = self.head.in_dim();
            dropout_mask(dim, self.dropout, &mut rng_for(seed, 0))
        });
        self.forward(input, features, mask)
    }

    pub fn backward(&self, cache: &DeepCache, dlogits: [f64; 2], grads: &mut DeepModel) {
        let mut dc = self.head.backward(&cache.head, dlogits, &mut grads.head);
        if let Some(m) = &cache.mask {
            dc.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        let dz = self.fusion.backward(&cache.fusion, &dc, &mut grads.fusion);
        let (dz_m, dz_c) = dz.split_at(self.message.out_dim());
        self.message.backward(&cache.msg, dz_m, &mut grads.message);
        let drows = self
            .aggregate
            .backward(&cache.agg, dz_c, &mut grads.aggregate)
            .expect("aggregation input is a vector sequence");
        for (c, d) in cache.files.iter().zip(&drows) {
            self.file.backward(c, d, &mut grads.file);
        }
    }

    pub fn predict(&self, ex: &Example) -> Result<f64> {
        Ok(self.forward(&ex.encoded, Some(&ex.features), None)?.0.defective)
    }

    /// Evaluation-mode defect probabilities, computed in parallel.
    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<f64>> {
        examples.par_iter().map(|e| self.predict(e)).collect()
    }

    /// Replaces every parameter with zero.
    pub fn zeroed(&self) -> Self {
        self.zeros_like()
    }

    /// Uniform jitter, used to probe gradients away from ReLU kinks.
    pub fn perturbed(&self, scale: f64, seed: u64) -> Self {
        let mut m = self.clone();
        let mut rng = rng_for(seed, 0);
        for (_, t) in m.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-scale..scale));
        }
        m
    }
}

fn prefixed<'a>(prefix: &str, v: Vec<(String, &'a Tensor)>) -> impl Iterator<Item = (String, &'a Tensor)> + 'a {
    let prefix = prefix.to_string();
    v.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

fn prefixed_mut<'a>(prefix: &str, v: Vec<(String, &'a mut Tensor)>) -> impl Iterator<Item = (String, &'a mut Tensor)> + 'a {
    let prefix = prefix.to_string();
    v.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

impl Parameters for DeepModel {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        prefixed("message", self.message.tensors())
            .chain(prefixed("file", self.file.tensors()))
            .chain(prefixed("aggregate", self.aggregate.tensors()))
            .chain(self.fusion.tensors())
            .chain(prefixed("head", self.head.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        prefixed_mut("message", self.message.tensors_mut())
            .chain(prefixed_mut("file", self.file.tensors_mut()))
            .chain(prefixed_mut("aggregate", self.aggregate.tensors_mut()))
            .chain(self.fusion.tensors_mut())
            .chain(prefixed_mut("head", self.head.tensors_mut()))
            .collect()
    }
}
