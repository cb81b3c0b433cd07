use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LabeledPair;
use crate::embed::EmbeddingMatrix;
use crate::error::Result;
use crate::graph::TextAttributedGraph;
use crate::linalg::Matrix;

/// Two Gaussian blobs on the unit sphere whose intra-blob pairs are edges.
///
/// A `holdout` fraction of intra-blob pairs is left out of the graph as
/// held-out positives; held-out negatives are cross-blob pairs.
#[derive(Debug, Clone)]
pub struct TwoBlobs {
    pub graph: TextAttributedGraph,
    pub embeddings: EmbeddingMatrix<f64>,
    pub held_out_positives: Vec<(usize, usize)>,
    /// All cross-blob pairs in shuffled order.
    pub cross_pairs: Vec<(usize, usize)>,
}

impl TwoBlobs {
    /// Held-out positives plus as many cross-blob pairs that do not occur
    /// in `training`.
    pub fn held_out(&self, training: &[LabeledPair]) -> Vec<LabeledPair> {
        let seen: HashSet<(usize, usize)> = training.iter().map(|p| (p.u.min(p.v), p.u.max(p.v))).collect();
        let mut out: Vec<LabeledPair> =
            self.held_out_positives.iter().map(|&(u, v)| LabeledPair { u, v, label: 1 }).collect();
        out.extend(
            self.cross_pairs
                .iter()
                .filter(|p| !seen.contains(p))
                .take(self.held_out_positives.len())
                .map(|&(u, v)| LabeledPair { u, v, label: 0 }),
        );
        out
    }
}

pub fn two_blobs(nodes_per_class: usize, dim: usize, noise: f64, holdout: f64, seed: u64) -> Result<TwoBlobs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = 2 * nodes_per_class;
    let centers: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        data.extend(centers[i / nodes_per_class].iter().map(|c| c + noise * normal.sample(&mut rng)));
    }
    let embeddings = EmbeddingMatrix::normalized(Matrix::from_vec(n, dim, data)?);

    let class = |i: usize| i / nodes_per_class;
    let mut intra: Vec<(usize, usize)> = Vec::new();
    let mut cross: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if class(u) == class(v) { intra.push((u, v)) } else { cross.push((u, v)) }
        }
    }
    intra.shuffle(&mut rng);
    cross.shuffle(&mut rng);
    let n_held = (intra.len() as f64 * holdout).round() as usize;
    let held_pos = intra.split_off(intra.len() - n_held);
    let labels = (0..n).map(|i| Some(class(i))).collect();
    let (graph, _) = TextAttributedGraph::new(vec![String::new(); n], labels, intra, 2)?;
    Ok(TwoBlobs { graph, embeddings, held_out_positives: held_pos, cross_pairs: cross })
}
