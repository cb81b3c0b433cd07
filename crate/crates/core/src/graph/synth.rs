//! Stochastic-block-model text-attributed graphs for tests and demos.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabelSet, TextAttributedGraph};
use crate::error::{Error, Result};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "sa", "do", "fu", "ga", "hi", "jo", "be", "ce", "ly",
    "mo", "nu", "ri", "so", "te", "wa",
];

/// Fraction of a node's tokens drawn from its own class vocabulary; the
/// rest come from a class-neutral background vocabulary.
const CLASS_TOKEN_FRACTION: f64 = 0.7;
const TOKENS_PER_NODE: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub vocab_per_class: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub graph: TextAttributedGraph,
    pub labels: LabelSet,
    /// Per-class vocabularies, index = class id. Feeds the mock generator.
    pub class_vocab: Vec<Vec<String>>,
    pub background_vocab: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.random_range(2..=4);
        let w: String = (0..syllables).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

/// Generates a labeled SBM graph whose node texts are bags of class tokens.
///
/// Node `i` belongs to class `i / nodes_per_class`. Each unordered pair is
/// linked independently with `intra_edge_prob` (same class) or
/// `inter_edge_prob` (different classes).
pub fn synth_dataset(p: &SynthParams) -> Result<SynthDataset> {
    if p.num_classes == 0 || p.nodes_per_class == 0 || p.vocab_per_class == 0 {
        return Err(Error::InvalidParameter(
            "num_classes, nodes_per_class and vocab_per_class must be positive".into(),
        ));
    }
    for (name, v) in [("intra_edge_prob", p.intra_edge_prob), ("inter_edge_prob", p.inter_edge_prob)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} = {v} is not a probability")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut taken = HashSet::new();
    let class_vocab: Vec<Vec<String>> = (0..p.num_classes)
        .map(|_| (0..p.vocab_per_class).map(|_| pseudo_word(&mut rng, &mut taken)).collect())
        .collect();
    let background_vocab: Vec<String> = (0..p.vocab_per_class).map(|_| pseudo_word(&mut rng, &mut taken)).collect();

    let label_texts = class_vocab
        .iter()
        .map(|v| {
            let mut name = v[0].clone();
            name[..1].make_ascii_uppercase();
            format!("{name} Studies")
        })
        .collect();
    let labels = LabelSet::new(label_texts)?;

    let n = p.num_classes * p.nodes_per_class;
    let class_of = |i: usize| i / p.nodes_per_class;
    let texts = (0..n)
        .map(|i| {
            let own = &class_vocab[class_of(i)];
            (0..TOKENS_PER_NODE)
                .map(|_| {
                    let pool = if rng.random_bool(CLASS_TOKEN_FRACTION) { own } else { &background_vocab };
                    pool[rng.random_range(0..pool.len())].as_str()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let prob = if class_of(u) == class_of(v) { p.intra_edge_prob } else { p.inter_edge_prob };
            if prob > 0.0 && rng.random_bool(prob) {
                edges.push((u, v));
            }
        }
    }
    let node_labels = (0..n).map(|i| Some(class_of(i))).collect();
    let (graph, _) = TextAttributedGraph::new(texts, node_labels, edges, p.num_classes)?;
    Ok(SynthDataset { graph, labels, class_vocab, background_vocab })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SynthParams {
        SynthParams {
            num_classes: 3,
            nodes_per_class: 200,
            vocab_per_class: 40,
            intra_edge_prob: 0.02,
            inter_edge_prob: 0.001,
            seed: 1,
        }
    }

    #[test]
    fn no_cross_class_edges_when_inter_prob_zero() {
        let d = synth_dataset(&SynthParams { inter_edge_prob: 0.0, nodes_per_class: 50, ..params() }).unwrap();
        assert!(d.graph.num_edges() > 0);
        assert!(d.graph.edges().iter().all(|&(u, v)| d.graph.label(u) == d.graph.label(v)));
    }

    #[test]
    fn empty_graph_is_invalid() {
        let err = synth_dataset(&SynthParams { nodes_per_class: 0, ..params() }).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        assert!(synth_dataset(&SynthParams { intra_edge_prob: 1.5, ..params() }).is_err());
    }

    #[test]
    fn edge_counts_within_three_sigma_of_binomial() {
        let p = params();
        let d = synth_dataset(&p).unwrap();
        let npc = p.nodes_per_class as f64;
        let k = p.num_classes as f64;
        let intra_pairs = k * npc * (npc - 1.0) / 2.0;
        let inter_pairs = k * (k - 1.0) / 2.0 * npc * npc;
        let (intra, inter): (Vec<&(usize, usize)>, Vec<_>) =
            d.graph.edges().iter().partition(|&&(u, v)| d.graph.label(u) == d.graph.label(v));
        for (count, pairs, prob) in
            [(intra.len(), intra_pairs, p.intra_edge_prob), (inter.len(), inter_pairs, p.inter_edge_prob)]
        {
            let mean = pairs * prob;
            let sigma = (pairs * prob * (1.0 - prob)).sqrt();
            assert!(
                (count as f64 - mean).abs() <= 3.0 * sigma,
                "count {count} vs expectation {mean:.1} (sigma {sigma:.2})"
            );
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = SynthParams { nodes_per_class: 30, ..params() };
        let a = synth_dataset(&p).unwrap();
        let b = synth_dataset(&p).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.class_vocab, b.class_vocab);
        let c = synth_dataset(&SynthParams { seed: 2, ..p }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn texts_are_mostly_class_tokens() {
        let d = synth_dataset(&SynthParams { nodes_per_class: 50, ..params() }).unwrap();
        let vocab: Vec<HashSet<&str>> = d.class_vocab.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
        let (mut own, mut total) = (0usize, 0usize);
        for i in 0..d.graph.num_nodes() {
            let c = d.graph.label(i).unwrap();
            for tok in d.graph.text(i).split_whitespace() {
                total += 1;
                own += vocab[c].contains(tok) as usize;
            }
        }
        let frac = own as f64 / total as f64;
        assert!((frac - CLASS_TOKEN_FRACTION).abs() < 0.03, "{frac}");
    }
}
