use rand::seq::index::sample;

use super::Parameters;
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares analytic gradients with central differences.
///
/// `loss` returns the scalar loss and the analytic gradient at the given
/// parameters. At most `per_tensor` coordinates of each tensor are checked,
/// chosen with `seed`. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<P, F>(params: &P, loss: F, eps: f64, per_tensor: usize, seed: u64) -> Result<GradCheck>
where
    P: Parameters,
    F: Fn(&P) -> Result<(f64, P)>,
{
    let (_, analytic) = loss(params)?;
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|(_, t)| t.data().to_vec()).collect();
    let mut rng = rng_for(seed, 0);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    let names: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    for (ti, (name, len)) in names.into_iter().enumerate() {
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let shifted = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                p.tensors_mut()[ti].1.data_mut()[i] += delta;
                let l = loss(&p)?.0;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("loss at probe {name}[{i}]")));
                }
                Ok(l)
            };
            let numeric = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
            let a = grads[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (name.clone(), i);
            }
        }
    }
    Ok(report)
}
