//! Attaching generated nodes to the raw graph: similarity prefilter, a
//! pairwise edge classifier trained on raw edges, and global top-k.

mod attach;
mod blobs;
mod candidates;
mod mlp;
mod pairs;

pub use blobs::{two_blobs, TwoBlobs};
pub use attach::{link_generated_nodes, LinkOutcome, ScoredEdge};
pub use candidates::{candidate_order, prefilter_candidates, select_top_k, EdgeCandidate};
pub use mlp::{
    pair_accuracy, predict_pair, score_candidates, train_edge_predictor, EdgePredictorConfig, EdgePredictorParams,
    LinkTrainLog, DEFAULT_HIDDEN_CAP,
};
pub use pairs::{build_link_training_set, LabeledPair};
