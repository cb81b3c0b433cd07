use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TextAttributedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub u: usize,
    pub v: usize,
    /// 1 for an existing edge, 0 for a sampled non-edge.
    pub label: u8,
}

/// Every raw-raw edge as a positive plus the same number of distinct,
/// uniformly sampled non-adjacent pairs as negatives.
///
/// Negatives are drawn once from a seeded generator: rejection sampling
/// while non-edges are plentiful, exhaustive enumeration otherwise.
pub fn build_link_training_set(graph: &TextAttributedGraph, seed: u64) -> Result<Vec<LabeledPair>> {
    let n = graph.num_raw_nodes();
    let edges: Vec<(usize, usize)> = graph.edges().iter().copied().filter(|&(u, v)| u < n && v < n).collect();
    if edges.is_empty() {
        return Err(Error::InvalidParameter("graph has no raw edges to learn from".into()));
    }
    let needed = edges.len();
    let all_pairs = n * (n - 1) / 2;
    let available = all_pairs - needed;
    if available < needed {
        return Err(Error::GraphTooDense { needed, available });
    }
    let adj = graph.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives: Vec<(usize, usize)> = if available >= 4 * needed {
        let mut chosen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let pair = (u.min(v), u.max(v));
            if !adj.contains(pair.0, pair.1) && chosen.insert(pair) {
                out.push(pair);
            }
        }
        out
    } else {
        let mut pool: Vec<(usize, usize)> =
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|&(u, v)| !adj.contains(u, v)).collect();
        pool.shuffle(&mut rng);
        pool.truncate(needed);
        pool
    };
    Ok(edges
        .into_iter()
        .map(|(u, v)| LabeledPair { u, v, label: 1 })
        .chain(negatives.into_iter().map(|(u, v)| LabeledPair { u, v, label: 0 }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> TextAttributedGraph {
        TextAttributedGraph::new(vec![String::new(); n], vec![None; n], edges, 1).unwrap().0
    }

    #[test]
    fn equal_positives_and_negatives() {
        let g = graph(12, (0..10).map(|i| (i, i + 1)).collect());
        let pairs = build_link_training_set(&g, 0).unwrap();
        assert_eq!(pairs.len(), 20);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 10);
        assert_eq!(pairs.iter().filter(|p| p.label == 0).count(), 10);
    }

    #[test]
    fn complete_graph_is_too_dense() {
        let g = graph(4, (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect());
        assert!(matches!(build_link_training_set(&g, 0), Err(Error::GraphTooDense { needed: 6, available: 0 })));
    }

    #[test]
    fn dense_graph_uses_enumeration_and_stays_valid() {
        // 6 nodes, 15 pairs, 7 edges: 8 non-edges available, 7 needed.
        let edges = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5)];
        let g = graph(6, edges);
        let pairs = build_link_training_set(&g, 5).unwrap();
        let negs: HashSet<_> = pairs.iter().filter(|p| p.label == 0).map(|p| (p.u, p.v)).collect();
        assert_eq!(negs.len(), 7);
        assert!(negs.iter().all(|&(u, v)| u != v && !g.adjacency().contains(u, v)));
    }

    #[test]
    fn deterministic_under_seed() {
        let g = graph(30, (0..29).map(|i| (i, i + 1)).collect());
        assert_eq!(build_link_training_set(&g, 3).unwrap(), build_link_training_set(&g, 3).unwrap());
        assert_ne!(build_link_training_set(&g, 3).unwrap(), build_link_training_set(&g, 4).unwrap());
    }
}
