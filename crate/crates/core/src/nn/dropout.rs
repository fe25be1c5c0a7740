use rand::Rng;

use crate::error::{Error, Result};
use crate::util::rng_for;

/// Inverted-dropout multipliers: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Identity at inference time; during training zeroes each element with
/// probability `rate` and rescales the survivors.
///
/// ```
/// use simcom::nn::dropout;
/// let x = vec![1.0; 8];
/// assert_eq!(dropout(&x, 0.5, false, 1).unwrap(), x);
/// assert!(dropout(&x, 1.0, true, 1).is_err());
/// ```
pub fn dropout(x: &[f64], rate: f64, training: bool, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x.to_vec());
    }
    let mask = dropout_mask(x.len(), rate, &mut rng_for(seed, 0));
    Ok(x.iter().zip(mask).map(|(a, m)| a * m).collect())
}
