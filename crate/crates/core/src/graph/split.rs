use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TextAttributedGraph;
use crate::error::{Error, Result};

/// K-shot train set plus validation and test ids, all raw nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub k_shots: usize,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// Ids of appended generated nodes that carry supervision.
    #[serde(default)]
    pub generated_train_ids: Vec<usize>,
}

impl FewShotSplit {
    /// The full supervised set: raw K-shot nodes followed by generated nodes.
    pub fn labeled_ids(&self) -> Vec<usize> {
        self.train_ids.iter().chain(&self.generated_train_ids).copied().collect()
    }

    pub fn with_generated(mut self, ids: impl IntoIterator<Item = usize>) -> Self {
        self.generated_train_ids = ids.into_iter().collect();
        self
    }
}

/// A predefined partition (e.g. the official split of a benchmark). K-shot
/// training nodes are sampled from `train`; `val` and `test` are used as is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FixedSplit {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }
}

/// Takes the first `k` nodes of each class in `order`, returning the
/// chosen ids (class-major) and the untouched remainder in order.
fn take_per_class(
    graph: &TextAttributedGraph,
    order: &[usize],
    k: usize,
    num_classes: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    let mut rest = Vec::with_capacity(order.len());
    for &id in order {
        let Some(c) = graph.label(id) else { continue };
        if per_class[c].len() < k {
            per_class[c].push(id);
        } else {
            rest.push(id);
        }
    }
    if let Some(c) = per_class.iter().position(|ids| ids.len() < k) {
        return Err(Error::InsufficientNodes(format!(
            "class {c} has {} labeled nodes, {k} shots requested",
            per_class[c].len()
        )));
    }
    Ok((per_class.concat(), rest))
}

fn check_raw(graph: &TextAttributedGraph, ids: &[usize], what: &str) -> Result<()> {
    match ids.iter().find(|&&id| id >= graph.num_raw_nodes() || graph.label(id).is_none()) {
        Some(id) => Err(Error::InvalidParameter(format!("{what} id {id} is not a labeled raw node"))),
        None => Ok(()),
    }
}

/// Samples exactly `k` training nodes per class, then `val_size` and
/// `test_size` nodes uniformly from the labeled remainder.
///
/// All draws come from one seeded permutation of the raw nodes, so the
/// split is a pure function of `(graph, k, sizes, seed)`.
pub fn sample_few_shot_split(
    graph: &TextAttributedGraph,
    num_classes: usize,
    k: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<FewShotSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..graph.num_raw_nodes()).collect();
    order.shuffle(&mut rng);
    let (train_ids, rest) = take_per_class(graph, &order, k, num_classes)?;
    if rest.len() < val_size + test_size {
        return Err(Error::InsufficientNodes(format!(
            "{} labeled nodes remain after sampling train, {} needed for val+test",
            rest.len(),
            val_size + test_size
        )));
    }
    Ok(FewShotSplit {
        k_shots: k,
        train_ids,
        val_ids: rest[..val_size].to_vec(),
        test_ids: rest[val_size..val_size + test_size].to_vec(),
        generated_train_ids: Vec::new(),
    })
}

/// Samples `k` training nodes per class from a fixed partition's train pool.
pub fn sample_from_fixed_split(
    graph: &TextAttributedGraph,
    num_classes: usize,
    fixed: &FixedSplit,
    k: usize,
    seed: u64,
) -> Result<FewShotSplit> {
    check_raw(graph, &fixed.train, "train")?;
    check_raw(graph, &fixed.val, "val")?;
    check_raw(graph, &fixed.test, "test")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = fixed.train.clone();
    order.shuffle(&mut rng);
    let (train_ids, _) = take_per_class(graph, &order, k, num_classes)?;
    Ok(FewShotSplit {
        k_shots: k,
        train_ids,
        val_ids: fixed.val.clone(),
        test_ids: fixed.test.clone(),
        generated_train_ids: Vec::new(),
    })
}
