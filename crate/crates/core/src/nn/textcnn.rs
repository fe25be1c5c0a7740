use rand::Rng;

use super::{relu, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::text::PAD;

/// Filters of one window size: weights `[filters, window, in_dim]`, bias
/// `[filters]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub window: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvBank {
    pub fn filters(&self) -> usize {
        self.bias.len()
    }
}

/// Convolution over token windows with ReLU and max-over-time pooling.
///
/// With an embedding table the extractor consumes token ids; without one it
/// consumes a sequence of vectors (used to aggregate per-file vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnn {
    pub embedding: Option<Tensor>,
    pub banks: Vec<ConvBank>,
    in_dim: usize,
}

pub enum CnnInput<'a> {
    Tokens(&'a [u32]),
    Vectors(&'a [Vec<f64>]),
}

/// Forward state needed by [`TextCnn::backward`].
#[derive(Debug, Clone)]
pub struct CnnCache {
    /// Input matrix, `len × in_dim`, after padding extension.
    x: Vec<f64>,
    len: usize,
    orig_len: usize,
    tokens: Option<Vec<u32>>,
    /// Per bank, per filter: (argmax position, max pre-activation).
    pooled: Vec<Vec<(usize, f64)>>,
}

/// Splits `total` filters over `n` window sizes, remainder to the smaller
/// windows first.
pub(crate) fn split_filters(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

/// Flattened matrix, rows, columns, token ids.
type InputMatrix = (Vec<f64>, usize, usize, Option<Vec<u32>>);

impl TextCnn {
    pub fn new(
        vocab_size: Option<usize>,
        in_dim: usize,
        windows: &[usize],
        total_filters: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embedding = vocab_size.map(|v| Tensor::glorot(&[v, in_dim], v, in_dim, rng));
        let banks = windows
            .iter()
            .zip(split_filters(total_filters, windows.len()))
            .map(|(&k, f)| ConvBank {
                window: k,
                weight: Tensor::glorot(&[f, k, in_dim], k * in_dim, f, rng),
                bias: Tensor::glorot(&[f], k * in_dim, f, rng),
            })
            .collect();
        TextCnn {
            embedding,
            banks,
            in_dim,
        }
    }

    /// Builds from explicit tensors; shapes are validated.
    pub fn from_parts(embedding: Option<Tensor>, banks: Vec<ConvBank>) -> Result<Self> {
        let in_dim = match (&embedding, banks.first()) {
            (Some(e), _) => e.shape()[1],
            (None, Some(b)) => b.weight.shape()[2],
            (None, None) => return Err(Error::InvalidArgument("textCNN needs filters".into())),
        };
        for b in &banks {
            let s = b.weight.shape();
            if s.len() != 3 || s[1] != b.window || s[2] != in_dim || b.bias.len() != s[0] {
                return Err(Error::dim(in_dim, s.get(2).copied().unwrap_or(0), "conv bank shape"));
            }
        }
        Ok(TextCnn {
            embedding,
            banks,
            in_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.banks.iter().map(ConvBank::filters).sum()
    }

    pub fn max_window(&self) -> usize {
        self.banks.iter().map(|b| b.window).max().unwrap_or(1)
    }

    fn input_matrix(&self, input: CnnInput<'_>) -> Result<InputMatrix> {
        let d = self.in_dim;
        let min_len = self.max_window();
        match input {
            CnnInput::Tokens(ids) => {
                let emb = self.embedding.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("token input needs an embedding table".into())
                })?;
                let vocab = emb.shape()[0];
                let mut tokens = ids.to_vec();
                if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab) {
                    return Err(Error::TokenOutOfRange { id: bad, vocab });
                }
                let orig = tokens.len();
                if tokens.len() < min_len {
                    tokens.resize(min_len, PAD);
                }
                let mut x = Vec::with_capacity(tokens.len() * d);
                for &t in &tokens {
                    let t = t as usize;
                    x.extend_from_slice(&emb.data()[t * d..(t + 1) * d]);
                }
                Ok((x, tokens.len(), orig, Some(tokens)))
            }
            CnnInput::Vectors(rows) => {
                let mut x = Vec::with_capacity(rows.len().max(min_len) * d);
                for r in rows {
                    if r.len() != d {
                        return Err(Error::dim(d, r.len(), "textCNN input vector"));
                    }
                    x.extend_from_slice(r);
                }
                let orig = rows.len();
                let len = orig.max(min_len);
                x.resize(len * d, 0.0);
                Ok((x, len, orig, None))
            }
        }
    }

    pub fn forward(&self, input: CnnInput<'_>) -> Result<(Vec<f64>, CnnCache)> {
        let d = self.in_dim;
        let (x, len, orig_len, tokens) = self.input_matrix(input)?;
        let mut out = Vec::with_capacity(self.out_dim());
        let mut pooled = Vec::with_capacity(self.banks.len());
        for bank in &self.banks {
            let k = bank.window;
            let span = k * d;
            let mut bank_pool = Vec::with_capacity(bank.filters());
            for (f, w) in bank.weight.data().chunks_exact(span).enumerate() {
                let b = bank.bias.data()[f];
                let mut best = (0usize, f64::NEG_INFINITY);
                for pos in 0..=(len - k) {
                    let window = &x[pos * d..pos * d + span];
                    let s = b + w.iter().zip(window).map(|(a, c)| a * c).sum::<f64>();
                    if s > best.1 {
                        best = (pos, s);
                    }
                }
                out.push(relu(best.1));
                bank_pool.push(best);
            }
            pooled.push(bank_pool);
        }
        Ok((
            out,
            CnnCache {
                x,
                len,
                orig_len,
                tokens,
                pooled,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads`. For vector input the
    /// gradient with respect to the (unpadded) input rows is returned.
    pub fn backward(&self, cache: &CnnCache, dout: &[f64], grads: &mut TextCnn) -> Option<Vec<Vec<f64>>> {
        let d = self.in_dim;
        let mut dx = vec![0.0; cache.len * d];
        let mut o = 0;
        for ((bank, gbank), pool) in self.banks.iter().zip(grads.banks.iter_mut()).zip(&cache.pooled) {
            let span = bank.window * d;
            for (f, &(pos, pre)) in pool.iter().enumerate() {
                let g = dout[o];
                o += 1;
                if g == 0.0 || pre <= 0.0 {
                    continue;
                }
                gbank.bias.data_mut()[f] += g;
                let w = &bank.weight.data()[f * span..(f + 1) * span];
                let gw = &mut gbank.weight.data_mut()[f * span..(f + 1) * span];
                let window = &cache.x[pos * d..pos * d + span];
                let gx = &mut dx[pos * d..pos * d + span];
                for i in 0..span {
                    gw[i] += g * window[i];
                    gx[i] += g * w[i];
                }
            }
        }
        match (&cache.tokens, grads.embedding.as_mut()) {
            (Some(tokens), Some(gemb)) => {
                for (p, &t) in tokens.iter().enumerate() {
                    let t = t as usize;
                    let row = &mut gemb.data_mut()[t * d..(t + 1) * d];
                    for (r, g) in row.iter_mut().zip(&dx[p * d..(p + 1) * d]) {
                        *r += g;
                    }
                }
                None
            }
            _ => Some(
                dx.chunks_exact(d)
                    .take(cache.orig_len)
                    .map(<[f64]>::to_vec)
                    .collect(),
            ),
        }
    }
}

impl Parameters for TextCnn {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v = Vec::new();
        if let Some(e) = &self.embedding {
            v.push(("embedding".to_string(), e));
        }
        for b in &self.banks {
            v.push((format!("conv{}.weight", b.window), &b.weight));
            v.push((format!("conv{}.bias", b.window), &b.bias));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = Vec::new();
        if let Some(e) = &mut self.embedding {
            v.push(("embedding".to_string(), e));
        }
        for b in &mut self.banks {
            v.push((format!("conv{}.weight", b.window), &mut b.weight));
            v.push((format!("conv{}.bias", b.window), &mut b.bias));
        }
        v
    }
}
