use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSplit, N_CAT, N_CONT};
use crate::nn::{matvec, matvec_backward, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EarlyStrategy {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "AMF")]
    Amf,
    #[serde(rename = "GMF")]
    Gmf,
    None,
}

impl EarlyStrategy {
    pub const ALL: [EarlyStrategy; 5] = [
        EarlyStrategy::Sc,
        EarlyStrategy::Tc,
        EarlyStrategy::Amf,
        EarlyStrategy::Gmf,
        EarlyStrategy::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EarlyStrategy::Sc => "SC",
            EarlyStrategy::Tc => "TC",
            EarlyStrategy::Amf => "AMF",
            EarlyStrategy::Gmf => "GMF",
            EarlyStrategy::None => "None",
        }
    }
}

impl fmt::Display for EarlyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EarlyStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EarlyStrategy::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

const LEAKY_SLOPE: f64 = 0.01;

/// Parameters of one early-fusion strategy. `x` is the content vector
/// `Z_m ⊕ Z_c`, `t` the categorical features and `n` the continuous ones.
#[derive(Debug, Clone, PartialEq)]
pub enum EarlyFusion {
    None,
    Sc,
    Tc {
        w_cat: Tensor,
        w_cont: Tensor,
    },
    Amf {
        w_x: Tensor,
        w_t: Tensor,
        w_n: Tensor,
        /// Attention vector over `[W_x x ⊕ W_j j]`, length `2·d_f`.
        a: Tensor,
    },
    Gmf {
        w_gt: Tensor,
        b_t: Tensor,
        w_gn: Tensor,
        b_n: Tensor,
        w_t: Tensor,
        w_n: Tensor,
        b_h: Tensor,
        beta: f64,
    },
}

#[derive(Debug, Clone)]
pub enum FusionCache {
    Plain,
    Tc {
        t: Vec<f64>,
        n: Vec<f64>,
    },
    Amf {
        inputs: [Vec<f64>; 3],
        proj: [Vec<f64>; 3],
        pre: [f64; 3],
        coef: [f64; 3],
    },
    Gmf {
        x: Vec<f64>,
        t: Vec<f64>,
        n: Vec<f64>,
        tx: Vec<f64>,
        nx: Vec<f64>,
        u_t: Vec<f64>,
        u_n: Vec<f64>,
        v_t: Vec<f64>,
        v_n: Vec<f64>,
        h: Vec<f64>,
        alpha: f64,
        clipped: bool,
    },
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Exponential normalization of three scores.
pub(crate) fn softmax3(s: [f64; 3]) -> [f64; 3] {
    let m = s[0].max(s[1]).max(s[2]);
    let e = s.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

impl EarlyFusion {
    /// Fresh parameters for `strategy` over a content vector of `dz`
    /// entries. `d_f` is the AMF projection width.
    pub fn new(strategy: EarlyStrategy, dz: usize, d_f: usize, beta: f64, rng: &mut impl Rng) -> Self {
        let g = |rows: usize, cols: usize, rng: &mut _| Tensor::glorot(&[rows, cols], cols, rows, rng);
        match strategy {
            EarlyStrategy::None => EarlyFusion::None,
            EarlyStrategy::Sc => EarlyFusion::Sc,
            EarlyStrategy::Tc => EarlyFusion::Tc {
                w_cat: g(N_CAT, N_CAT, rng),
                w_cont: g(N_CONT, N_CONT, rng),
            },
            EarlyStrategy::Amf => EarlyFusion::Amf {
                w_x: g(d_f, dz, rng),
                w_t: g(d_f, N_CAT, rng),
                w_n: g(d_f, N_CONT, rng),
                a: Tensor::glorot(&[2 * d_f], 2 * d_f, 1, rng),
            },
            EarlyStrategy::Gmf => EarlyFusion::Gmf {
                w_gt: g(dz, N_CAT + dz, rng),
                b_t: Tensor::zeros(&[dz]),
                w_gn: g(dz, N_CONT + dz, rng),
                b_n: Tensor::zeros(&[dz]),
                w_t: g(dz, N_CAT, rng),
                w_n: g(dz, N_CONT, rng),
                b_h: Tensor::zeros(&[dz]),
                beta,
            },
        }
    }

    pub fn strategy(&self) -> EarlyStrategy {
        match self {
            EarlyFusion::None => EarlyStrategy::None,
            EarlyFusion::Sc => EarlyStrategy::Sc,
            EarlyFusion::Tc { .. } => EarlyStrategy::Tc,
            EarlyFusion::Amf { .. } => EarlyStrategy::Amf,
            EarlyFusion::Gmf { .. } => EarlyStrategy::Gmf,
        }
    }

    /// Width of the fused vector for a content vector of `dz` entries.
    pub fn out_dim(&self, dz: usize) -> usize {
        match self {
            EarlyFusion::None | EarlyFusion::Gmf { .. } => dz,
            EarlyFusion::Sc | EarlyFusion::Tc { .. } => dz + N_CAT + N_CONT,
            EarlyFusion::Amf { w_x, .. } => w_x.shape()[0],
        }
    }

    pub fn needs_features(&self) -> bool {
        !matches!(self, EarlyFusion::None)
    }

    fn check_features(&self, f: Option<&FeatureSplit>) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = f.ok_or_else(|| {
            Error::InvalidArgument(format!("{} fusion needs hand-crafted features", self.strategy()))
        })?;
        if f.x_cat.len() != N_CAT {
            return Err(Error::dim(N_CAT, f.x_cat.len(), "categorical features"));
        }
        if f.x_cont.len() != N_CONT {
            return Err(Error::dim(N_CONT, f.x_cont.len(), "continuous features"));
        }
        Ok((f.x_cat.clone(), f.x_cont.clone()))
    }

    /// The AMF coefficients (α_xx, α_xt, α_xn) for given inputs.
    pub fn amf_coefficients(&self, x: &[f64], feats: &FeatureSplit) -> Result<[f64; 3]> {
        match self.forward(x, Some(feats))?.1 {
            FusionCache::Amf { coef, .. } => Ok(coef),
            _ => Err(Error::InvalidArgument("not an AMF fusion".into())),
        }
    }

    /// The GMF scale factor α and gated vector `h` for given inputs.
    pub fn gmf_scale(&self, x: &[f64], feats: &FeatureSplit) -> Result<(f64, Vec<f64>)> {
        match self.forward(x, Some(feats))?.1 {
            FusionCache::Gmf { alpha, h, .. } => Ok((alpha, h)),
            _ => Err(Error::InvalidArgument("not a GMF fusion".into())),
        }
    }

    pub fn forward(&self, x: &[f64], feats: Option<&FeatureSplit>) -> Result<(Vec<f64>, FusionCache)> {
        match self {
            EarlyFusion::None => Ok((x.to_vec(), FusionCache::Plain)),
            EarlyFusion::Sc => {
                let (t, n) = self.check_features(feats)?;
                Ok((concat(&concat(x, &t), &n), FusionCache::Plain))
            }
            EarlyFusion::Tc { w_cat, w_cont } => {
                let (t, n) = self.check_features(feats)?;
                let c = concat(&concat(x, &matvec(w_cat, &t)), &matvec(w_cont, &n));
                Ok((c, FusionCache::Tc { t, n }))
            }
            EarlyFusion::Amf { w_x, w_t, w_n, a } => {
                let (t, n) = self.check_features(feats)?;
                if x.len() != w_x.shape()[1] {
                    return Err(Error::dim(w_x.shape()[1], x.len(), "AMF content vector"));
                }
                let d_f = w_x.shape()[0];
                let proj = [matvec(w_x, x), matvec(w_t, &t), matvec(w_n, &n)];
                let (a1, a2) = a.data().split_at(d_f);
                let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
                let base = dot(a1, &proj[0]);
                let pre = [0, 1, 2].map(|j| base + dot(a2, &proj[j]));
                let coef = softmax3(pre.map(leaky));
                let c = (0..d_f)
                    .map(|i| (0..3).map(|j| coef[j] * proj[j][i]).sum())
                    .collect();
                Ok((
                    c,
                    FusionCache::Amf {
                        inputs: [x.to_vec(), t, n],
                        proj,
                        pre,
                        coef,
                    },
                ))
            }
            EarlyFusion::Gmf {
                w_gt,
                b_t,
                w_gn,
                b_n,
                w_t,
                w_n,
                b_h,
                beta,
            } => {
                let (t, n) = self.check_features(feats)?;
                if x.len() != b_h.len() {
                    return Err(Error::dim(b_h.len(), x.len(), "GMF content vector"));
                }
                let tx = concat(&t, x);
                let nx = concat(&n, x);
                let add = |v: Vec<f64>, b: &Tensor| -> Vec<f64> { v.iter().zip(b.data()).map(|(p, q)| p + q).collect() };
                let u_t = add(matvec(w_gt, &tx), b_t);
                let u_n = add(matvec(w_gn, &nx), b_n);
                let v_t = matvec(w_t, &t);
                let v_n = matvec(w_n, &n);
                let h: Vec<f64> = (0..x.len())
                    .map(|i| u_t[i].max(0.0) * v_t[i] + u_n[i].max(0.0) * v_n[i] + b_h.data()[i])
                    .collect();
                let (hn, xn) = (norm(&h), norm(x));
                let (alpha, clipped) = if hn == 0.0 {
                    (1.0, true)
                } else {
                    let r = xn / hn * beta;
                    if r >= 1.0 {
                        (1.0, true)
                    } else {
                        (r, false)
                    }
                };
                let c = x.iter().zip(&h).map(|(a, b)| a + alpha * b).collect();
                Ok((
                    c,
                    FusionCache::Gmf {
                        x: x.to_vec(),
                        t,
                        n,
                        tx,
                        nx,
                        u_t,
                        u_n,
                        v_t,
                        v_n,
                        h,
                        alpha,
                        clipped,
                    },
                ))
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the content vector.
    pub fn backward(&self, cache: &FusionCache, dc: &[f64], grads: &mut EarlyFusion) -> Vec<f64> {
        match (self, cache, grads) {
            (EarlyFusion::None, _, _) => dc.to_vec(),
            (EarlyFusion::Sc, _, _) => dc[..dc.len() - N_CAT - N_CONT].to_vec(),
            (EarlyFusion::Tc { w_cat, w_cont }, FusionCache::Tc { t, n }, EarlyFusion::Tc { w_cat: g_cat, w_cont: g_cont }) => {
                let dz = dc.len() - N_CAT - N_CONT;
                matvec_backward(w_cat, t, &dc[dz..dz + N_CAT], g_cat);
                matvec_backward(w_cont, n, &dc[dz + N_CAT..], g_cont);
                dc[..dz].to_vec()
            }
            (
                EarlyFusion::Amf { w_x, w_t, w_n, a },
                FusionCache::Amf { inputs, proj, pre, coef },
                EarlyFusion::Amf {
                    w_x: gw_x,
                    w_t: gw_t,
                    w_n: gw_n,
                    a: ga,
                },
            ) => {
                let d_f = dc.len();
                let (a1, a2) = a.data().split_at(d_f);
                let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
                let dcoef = [0, 1, 2].map(|j| dot(dc, &proj[j]));
                let mean: f64 = (0..3).map(|j| coef[j] * dcoef[j]).sum();
                let dpre = [0, 1, 2].map(|j| {
                    let ds = coef[j] * (dcoef[j] - mean);
                    ds * if pre[j] > 0.0 { 1.0 } else { LEAKY_SLOPE }
                });
                let mut dproj: [Vec<f64>; 3] = [0, 1, 2].map(|j| dc.iter().map(|g| coef[j] * g).collect());
                {
                    let (ga1, ga2) = ga.data_mut().split_at_mut(d_f);
                    for j in 0..3 {
                        for i in 0..d_f {
                            ga1[i] += dpre[j] * proj[0][i];
                            ga2[i] += dpre[j] * proj[j][i];
                            dproj[0][i] += dpre[j] * a1[i];
                            dproj[j][i] += dpre[j] * a2[i];
                        }
                    }
                }
                matvec_backward(w_t, &inputs[1], &dproj[1], gw_t);
                matvec_backward(w_n, &inputs[2], &dproj[2], gw_n);
                matvec_backward(w_x, &inputs[0], &dproj[0], gw_x)
            }
            (
                EarlyFusion::Gmf {
                    w_gt,
                    w_gn,
                    w_t,
                    w_n,
                    beta,
                    ..
                },
                FusionCache::Gmf {
                    x,
                    t,
                    n,
                    tx,
                    nx,
                    u_t,
                    u_n,
                    v_t,
                    v_n,
                    h,
                    alpha,
                    clipped,
                },
                EarlyFusion::Gmf {
                    w_gt: gw_gt,
                    b_t: gb_t,
                    w_gn: gw_gn,
                    b_n: gb_n,
                    w_t: gw_t,
                    w_n: gw_n,
                    b_h: gb_h,
                    ..
                },
            ) => {
                let dz = x.len();
                let mut dx = dc.to_vec();
                let mut dh: Vec<f64> = dc.iter().map(|g| alpha * g).collect();
                if !clipped {
                    let dalpha: f64 = dc.iter().zip(h).map(|(g, v)| g * v).sum();
                    let (xn, hn) = (norm(x), norm(h));
                    if xn > 0.0 {
                        for i in 0..dz {
                            dx[i] += dalpha * beta * x[i] / (xn * hn);
                        }
                    }
                    for i in 0..dz {
                        dh[i] -= dalpha * alpha * h[i] / (hn * hn);
                    }
                }
                let mut du_t = vec![0.0; dz];
                let mut du_n = vec![0.0; dz];
                let mut dv_t = vec![0.0; dz];
                let mut dv_n = vec![0.0; dz];
                for i in 0..dz {
                    gb_h.data_mut()[i] += dh[i];
                    dv_t[i] = dh[i] * u_t[i].max(0.0);
                    dv_n[i] = dh[i] * u_n[i].max(0.0);
                    if u_t[i] > 0.0 {
                        du_t[i] = dh[i] * v_t[i];
                    }
                    if u_n[i] > 0.0 {
                        du_n[i] = dh[i] * v_n[i];
                    }
                    gb_t.data_mut()[i] += du_t[i];
                    gb_n.data_mut()[i] += du_n[i];
                }
                matvec_backward(w_t, t, &dv_t, gw_t);
                matvec_backward(w_n, n, &dv_n, gw_n);
                let dtx = matvec_backward(w_gt, tx, &du_t, gw_gt);
                let dnx = matvec_backward(w_gn, nx, &du_n, gw_gn);
                for i in 0..dz {
                    dx[i] += dtx[N_CAT + i] + dnx[N_CONT + i];
                }
                dx
            }
            _ => unreachable!("fusion cache does not match its parameters"),
        }
    }
}

impl Parameters for EarlyFusion {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        match self {
            EarlyFusion::None | EarlyFusion::Sc => vec![],
            EarlyFusion::Tc { w_cat, w_cont } => vec![("tc.w_cat".into(), w_cat), ("tc.w_cont".into(), w_cont)],
            EarlyFusion::Amf { w_x, w_t, w_n, a } => vec![
                ("amf.w_x".into(), w_x),
                ("amf.w_t".into(), w_t),
                ("amf.w_n".into(), w_n),
                ("amf.a".into(), a),
            ],
            EarlyFusion::Gmf {
                w_gt,
                b_t,
                w_gn,
                b_n,
                w_t,
                w_n,
                b_h,
                ..
            } => vec![
                ("gmf.w_gt".into(), w_gt),
                ("gmf.b_t".into(), b_t),
                ("gmf.w_gn".into(), w_gn),
                ("gmf.b_n".into(), b_n),
                ("gmf.w_t".into(), w_t),
                ("gmf.w_n".into(), w_n),
                ("gmf.b_h".into(), b_h),
            ],
        }
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            EarlyFusion::None | EarlyFusion::Sc => vec![],
            EarlyFusion::Tc { w_cat, w_cont } => vec![("tc.w_cat".into(), w_cat), ("tc.w_cont".into(), w_cont)],
            EarlyFusion::Amf { w_x, w_t, w_n, a } => vec![
                ("amf.w_x".into(), w_x),
                ("amf.w_t".into(), w_t),
                ("amf.w_n".into(), w_n),
                ("amf.a".into(), a),
            ],
            EarlyFusion::Gmf {
                w_gt,
                b_t,
                w_gn,
                b_n,
                w_t,
                w_n,
                b_h,
                ..
            } => vec![
                ("gmf.w_gt".into(), w_gt),
                ("gmf.b_t".into(), b_t),
                ("gmf.w_gn".into(), w_gn),
                ("gmf.b_n".into(), b_n),
                ("gmf.w_t".into(), w_t),
                ("gmf.w_n".into(), w_n),
                ("gmf.b_h".into(), b_h),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;
    use crate::util::rng_for;

    fn feats(rng: &mut impl Rng) -> FeatureSplit {
        FeatureSplit {
            x_cat: vec![1.0],
            x_cont: (0..N_CONT).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        }
    }

    #[test]
    fn strategy_tags_parse() {
        assert_eq!("gmf".parse::<EarlyStrategy>().unwrap(), EarlyStrategy::Gmf);
        assert!(matches!("XYZ".parse::<EarlyStrategy>(), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn sc_dimension() {
        let mut rng = rng_for(1, 0);
        let f = feats(&mut rng);
        let (c, _) = EarlyFusion::Sc.forward(&[0.5; 16], Some(&f)).unwrap();
        assert_eq!(c.len(), 30);
        assert_eq!(EarlyFusion::Sc.out_dim(16), 30);
        assert!(EarlyFusion::Sc.forward(&[0.5; 16], None).is_err());
    }

    #[test]
    fn gmf_half_scale() {
        // Zero gates leave h = b_h; set ‖b_h‖ = 2‖x‖.
        let mut rng = rng_for(2, 0);
        let mut g = EarlyFusion::new(EarlyStrategy::Gmf, 3, 3, 1.0, &mut rng);
        let EarlyFusion::Gmf { w_gt, w_gn, b_h, .. } = &mut g else { unreachable!() };
        w_gt.fill(0.0);
        w_gn.fill(0.0);
        *b_h = Tensor::from_vec(&[3], vec![0.0, 0.0, 2.0]).unwrap();
        let x = [1.0, 0.0, 0.0];
        let f = feats(&mut rng);
        let (alpha, h) = g.gmf_scale(&x, &f).unwrap();
        assert_eq!(alpha, 0.5);
        let (c, _) = g.forward(&x, Some(&f)).unwrap();
        assert_eq!(c, vec![1.0, 0.0, 0.5 * h[2]]);
    }

    fn check(strategy: EarlyStrategy) {
        let mut rng = rng_for(7, strategy as u64);
        let dz = 5;
        let fusion = EarlyFusion::new(strategy, dz, 4, 0.3, &mut rng);
        let f = feats(&mut rng);
        let x: Vec<f64> = (0..dz).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = fusion.out_dim(dz);
        let target: Vec<f64> = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &EarlyFusion| {
            let (c, cache) = p.forward(&x, Some(&f))?;
            let l = c.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>();
            let mut g = p.zeros_like();
            p.backward(&cache, &target, &mut g);
            Ok((l, g))
        };
        let r = finite_diff_check(&fusion, loss, 1e-5, usize::MAX, 0).unwrap();
        assert!(r.max_rel_error < 1e-4, "{strategy}: {r:?}");

        // Input gradient by central differences.
        let (_, cache) = fusion.forward(&x, Some(&f)).unwrap();
        let dx = fusion.backward(&cache, &target, &mut fusion.zeros_like());
        for i in 0..dz {
            let eval = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                let (c, _) = fusion.forward(&y, Some(&f)).unwrap();
                c.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>()
            };
            let num = (eval(1e-5) - eval(-1e-5)) / 2e-5;
            let rel = (num - dx[i]).abs() / num.abs().max(dx[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "{strategy} dx[{i}]: {num} vs {}", dx[i]);
        }
    }

    #[test]
    fn gradients_every_strategy() {
        for s in EarlyStrategy::ALL {
            check(s);
        }
    }
}
