//! Two-layer GCN and GAT node classifiers with hand-written backward
//! passes, trained full-batch on a masked cross-entropy objective.

mod gat;
mod gcn;
mod loss;
mod train;

pub use gat::{gat_attention, gat_forward, GatAttention, GatParams};
pub use gcn::{gcn_forward, GcnParams};
pub use loss::{masked_xent_loss, softmax_rows};
pub use train::{
    evaluate, grad_check, load_model, save_model, train_gnn, EpochRecord, GnnModel, Prediction, TrainLog,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::linalg::CsrMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            other => Err(Error::InvalidParameter(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Hyperparameter search space for the classifiers.
pub mod grid {
    pub const HIDDEN: [usize; 5] = [16, 32, 64, 128, 256];
    pub const DROPOUT: [f64; 4] = [0.0, 0.2, 0.5, 0.8];
    pub const LEARNING_RATE: [f64; 4] = [1e-2, 5e-2, 5e-3, 1e-3];
    pub const WEIGHT_DECAY: [f64; 3] = [5e-4, 5e-5, 0.0];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden width. For GAT this is the concatenated width over heads.
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub precision: Precision,
    pub heads: usize,
    pub negative_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            dropout: 0.5,
            learning_rate: 1e-2,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            precision: Precision::F64,
            heads: 8,
            negative_slope: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.hidden == 0 {
            return bad("hidden width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.heads == 0 {
            return bad("GAT needs at least one head".into());
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rate and weight decay must be non-negative".into());
        }
        Ok(())
    }

    /// Per-head width of the first GAT layer.
    pub fn head_width(&self) -> usize {
        (self.hidden / self.heads).max(1)
    }
}

/// `D^-1/2 (A + I) D^-1/2` in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency<T> {
    matrix: CsrMatrix<T>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.n_rows()
    }
}

pub fn normalize_adjacency<T: Scalar>(adj: &Adjacency) -> NormalizedAdjacency<T> {
    let n = adj.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((adj.degree(i) + 1) as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(adj.nnz() + n);
    for i in 0..n {
        triplets.push((i, i, T::of(inv_sqrt[i] * inv_sqrt[i])));
        for &j in adj.neighbors(i) {
            triplets.push((i, j, T::of(inv_sqrt[i] * inv_sqrt[j])));
        }
    }
    NormalizedAdjacency { matrix: CsrMatrix::from_triplets(n, n, triplets).expect("ids come from the adjacency") }
}

/// Each node's closed neighborhood (itself plus neighbors), sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedNeighborhoods {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl ClosedNeighborhoods {
    pub fn new(adj: &Adjacency) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(adj.nnz() + adj.num_nodes());
        for i in 0..adj.num_nodes() {
            let start = indices.len();
            indices.push(i);
            indices.extend(adj.neighbors(i).iter().copied().filter(|&j| j != i));
            indices[start..].sort_unstable();
            indptr.push(indices.len());
        }
        Self { indptr, indices }
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn num_entries(&self) -> usize {
        self.indices.len()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    /// Position range of node `i`'s entries in per-entry arrays.
    pub fn span(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }
}

/// Node features in sparse form, with optional inverted dropout.
pub(crate) fn dropout_features<T: Scalar>(x: &CsrMatrix<T>, rate: f64, rng: Option<&mut impl Rng>) -> CsrMatrix<T> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let scale = T::of(1.0 / (1.0 - rate));
            let values = x.values().iter().map(|&v| if rng.random::<f64>() < rate { T::zero() } else { v * scale }).collect();
            x.with_values(values)
        }
        _ => x.clone(),
    }
}

fn check_features<T: Scalar>(x: &CsrMatrix<T>, nodes: usize, dim: usize) -> Result<()> {
    if x.n_rows() != nodes || x.n_cols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "features are {}x{}, model expects {nodes} nodes of dim {dim}",
            x.n_rows(),
            x.n_cols()
        )));
    }
    Ok(())
}
