use serde::{Deserialize, Serialize};

use super::{
    build_link_training_set, candidate_order, prefilter_candidates, score_candidates, train_edge_predictor,
    EdgeCandidate, EdgePredictorConfig, LinkTrainLog,
};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::TextAttributedGraph;
use crate::scalar::Scalar;

/// A selected generated-to-raw edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub gen_index: usize,
    pub raw_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub edges: Vec<ScoredEdge>,
    pub num_candidates: usize,
    /// Empty when no candidate passed the threshold and training was skipped.
    pub log: LinkTrainLog,
}

/// Prefilter, train on raw edges, score, and keep the global top
/// `top_k_multiplier × generated.rows()` candidates.
pub fn link_generated_nodes<T: Scalar>(
    raw_graph: &TextAttributedGraph,
    raw: &EmbeddingMatrix<T>,
    generated: &EmbeddingMatrix<T>,
    config: &EdgePredictorConfig,
) -> Result<LinkOutcome> {
    config.validate()?;
    if raw.rows() != raw_graph.num_raw_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} raw embedding rows for {} raw nodes",
            raw.rows(),
            raw_graph.num_raw_nodes()
        )));
    }
    let k = config.top_k_multiplier * generated.rows();
    let mut candidates: Vec<EdgeCandidate> = prefilter_candidates(generated, raw, config.delta)?;
    let num_candidates = candidates.len();
    if candidates.is_empty() || k == 0 {
        return Ok(LinkOutcome { edges: Vec::new(), num_candidates, log: LinkTrainLog::default() });
    }
    let pairs = build_link_training_set(raw_graph, config.seed)?;
    let (params, log) = train_edge_predictor(&pairs, raw, config)?;
    score_candidates(&params, generated, raw, &mut candidates)?;
    candidates.sort_by(candidate_order);
    let edges = candidates
        .iter()
        .take(k)
        .map(|c| ScoredEdge { gen_index: c.gen_index, raw_id: c.raw_id, score: c.score.expect("all scored") })
        .collect();
    Ok(LinkOutcome { edges, num_candidates, log })
}
