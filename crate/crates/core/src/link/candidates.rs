use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::scalar::Scalar;

/// A generated-node / raw-node pair that passed the similarity threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCandidate {
    pub gen_index: usize,
    pub raw_id: usize,
    pub similarity: f64,
    pub score: Option<f64>,
}

/// All `(generated, raw)` pairs whose embedding dot product exceeds
/// `delta`, ordered by `(gen_index, raw_id)`.
pub fn prefilter_candidates<T: Scalar>(
    generated: &EmbeddingMatrix<T>,
    raw: &EmbeddingMatrix<T>,
    delta: f64,
) -> Result<Vec<EdgeCandidate>> {
    if generated.dim() != raw.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generated embeddings have dim {}, raw have {}",
            generated.dim(),
            raw.dim()
        )));
    }
    let per_gen: Vec<Vec<EdgeCandidate>> = (0..generated.rows())
        .into_par_iter()
        .map(|g| {
            let hg = generated.row(g);
            (0..raw.rows())
                .filter_map(|v| {
                    let sim = dot(hg, raw.row(v)).as_f64();
                    (sim > delta).then_some(EdgeCandidate { gen_index: g, raw_id: v, similarity: sim, score: None })
                })
                .collect()
        })
        .collect();
    Ok(per_gen.concat())
}

/// Ranking used for top-k selection: higher score first, then higher
/// similarity, then ascending `(gen_index, raw_id)`. Unscored candidates
/// rank last.
pub fn candidate_order(a: &EdgeCandidate, b: &EdgeCandidate) -> Ordering {
    let score = |c: &EdgeCandidate| c.score.unwrap_or(f64::NEG_INFINITY);
    score(b)
        .total_cmp(&score(a))
        .then_with(|| b.similarity.total_cmp(&a.similarity))
        .then_with(|| (a.gen_index, a.raw_id).cmp(&(b.gen_index, b.raw_id)))
}

/// The `min(k, len)` best candidates across all generated nodes.
pub fn select_top_k(candidates: &[EdgeCandidate], k: usize) -> Vec<(usize, usize)> {
    let mut ranked: Vec<&EdgeCandidate> = candidates.iter().collect();
    ranked.sort_by(|a, b| candidate_order(a, b));
    ranked.into_iter().take(k).map(|c| (c.gen_index, c.raw_id)).collect()
}
