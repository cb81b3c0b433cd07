//! Signed feature hashing over lowercase word tokens.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "in", "is", "it", "its", "of", "on", "or",
    "that", "the", "this", "to", "was", "we", "were", "with",
];

/// Lowercase alphanumeric runs, stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Bucket index and sign for `token`: the first eight bytes of
/// `SHA-256(seed_le ‖ token)` select the bucket, bit 0 of the ninth the sign.
pub fn token_bucket(token: &str, dim: usize, seed: u64) -> (usize, bool) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    ((word % dim as u64) as usize, digest[8] & 1 == 0)
}

/// Hashes `text` into a `dim`-dimensional vector weighted by
/// `ln(1 + term frequency)`, then L2-normalizes it. Texts without tokens
/// map to the zero vector.
pub fn fallback_embed<T: Scalar>(text: &str, dim: usize, seed: u64) -> Vec<T> {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for tok in tokenize(text) {
        *tf.entry(tok).or_default() += 1;
    }
    let mut v = vec![0f64; dim];
    for (tok, count) in &tf {
        let (bucket, positive) = token_bucket(tok, dim, seed);
        let w = (1.0 + *count as f64).ln();
        v[bucket] += if positive { w } else { -w };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v.into_iter().map(T::of).collect()
}
