mod common;

use common::*;
use llm4ng::embed::{assemble_representations, embed_texts, fallback_embed, EmbedderConfig, EmbeddingMatrix};
use llm4ng::linalg::Matrix;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

/// Bucket of a token recomputed from the hash definition.
fn oracle_bucket(token: &str, dim: usize, seed: u64) -> usize {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(token.as_bytes());
    let d = Sha256::digest(&bytes);
    let mut word = 0u64;
    for (i, b) in d[..8].iter().enumerate() {
        word |= (*b as u64) << (8 * i);
    }
    (word % dim as u64) as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn disjoint_token_sets_are_orthogonal() {
    let a = "graph neural network message passing node";
    let b = "protein folding enzyme kinetics membrane";
    let ta: Vec<&str> = a.split(' ').collect();
    let tb: Vec<&str> = b.split(' ').collect();
    let ba: Vec<usize> = ta.iter().map(|t| oracle_bucket(t, 4096, 0)).collect();
    let bb: Vec<usize> = tb.iter().map(|t| oracle_bucket(t, 4096, 0)).collect();
    assert!(ba.iter().all(|x| !bb.contains(x)), "bucket collision between {ba:?} and {bb:?}");
    let (va, vb) = (fallback_embed::<f64>(a, 4096, 0), fallback_embed::<f64>(b, 4096, 0));
    assert_eq!(dot(&va, &vb), 0.0);
    let nonzero: Vec<usize> = va.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect();
    let mut expected = ba.clone();
    expected.sort_unstable();
    assert_eq!(nonzero, expected);
}

#[test]
fn repetition_keeps_normalized_vector() {
    let once = fallback_embed::<f64>("graph", 4096, 0);
    let thrice = fallback_embed::<f64>("graph graph graph", 4096, 0);
    assert_eq!(once, thrice);
    let b = oracle_bucket("graph", 4096, 0);
    assert_eq!(once[b].abs(), 1.0);
    // Mixed text: weights ln(1+3) and ln(1+1) before normalization.
    let mixed = fallback_embed::<f64>("graph graph graph node", 4096, 0);
    let (w1, w2) = (4f64.ln(), 2f64.ln());
    let n = (w1 * w1 + w2 * w2).sqrt();
    assert!((mixed[b].abs() - w1 / n).abs() < 1e-15);
    assert!((mixed[oracle_bucket("node", 4096, 0)].abs() - w2 / n).abs() < 1e-15);
}

#[test]
fn assembly_round_trips_bit_exactly() {
    let raw = EmbeddingMatrix::new(Matrix::from_rows(&random_unit_rows(7, 5, 1)).unwrap(), true);
    let gen = EmbeddingMatrix::new(Matrix::from_rows(&random_unit_rows(3, 5, 2)).unwrap(), true);
    let all = assemble_representations(&raw, &gen).unwrap();
    assert_eq!(all.rows(), 10);
    assert_eq!(all.slice_rows(0, 7), raw);
    assert_eq!(all.slice_rows(7, 10), gen);
    let wrong = EmbeddingMatrix::new(Matrix::<f64>::zeros(1, 4), true);
    assert!(assemble_representations(&raw, &wrong).is_err());
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "node", "edge", "the"]), 0..12)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dot_products_are_cosines(texts in prop::collection::vec(words(), 2..6), seed in 0u64..1000) {
        let m = embed_texts::<f64>(&texts, &EmbedderConfig::fallback(64, seed)).unwrap();
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                let d = dot(m.row(i), m.row(j));
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&d));
            }
        }
    }

    #[test]
    fn permuting_texts_permutes_rows(texts in prop::collection::vec(words(), 1..6), shift in 0usize..6) {
        let cfg = EmbedderConfig::fallback(32, 3);
        let n = texts.len();
        let rotated: Vec<String> = (0..n).map(|i| texts[(i + shift) % n].clone()).collect();
        let a = embed_texts::<f64>(&texts, &cfg).unwrap();
        let b = embed_texts::<f64>(&rotated, &cfg).unwrap();
        for i in 0..n {
            prop_assert_eq!(b.row(i), a.row((i + shift) % n));
        }
        prop_assert_eq!(embed_texts::<f64>(&texts, &cfg).unwrap(), a);
    }
}
