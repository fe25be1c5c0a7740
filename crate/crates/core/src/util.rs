use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hex SHA-256 over newline-joined items, shortened to 16 characters.
pub fn fingerprint<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for item in items {
        h.update(item.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())[..16].to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Independent deterministic stream for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pretty JSON with a trailing newline.
pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| crate::Error::format("json", e.to_string()))?;
    s.push('\n');
    Ok(s)
}
