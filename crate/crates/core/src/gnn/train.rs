use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gat::GatCache;
use super::gcn::GcnCache;
use super::{
    masked_xent_loss, normalize_adjacency, softmax_rows, Arch, ClosedNeighborhoods, GatParams, GcnParams,
    NormalizedAdjacency, TrainConfig,
};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, TextAttributedGraph};
use crate::linalg::{CsrMatrix, Matrix};
use crate::optim::Adam;
use crate::scalar::Scalar;
use crate::tensor_io::{read_bundle, write_bundle};

#[derive(Debug, Clone, PartialEq)]
pub enum GnnModel<T> {
    Gcn(GcnParams<T>),
    Gat(GatParams<T>),
}

enum Structure<T> {
    Gcn(NormalizedAdjacency<T>),
    Gat(ClosedNeighborhoods),
}

enum Cache<T> {
    Gcn(GcnCache<T>),
    Gat(GatCache<T>),
}

impl<T: Scalar> Structure<T> {
    fn new(arch: Arch, adj: &Adjacency) -> Self {
        match arch {
            Arch::Gcn => Structure::Gcn(normalize_adjacency(adj)),
            Arch::Gat => Structure::Gat(ClosedNeighborhoods::new(adj)),
        }
    }
}

impl<T: Scalar> GnnModel<T> {
    pub fn init(arch: Arch, input: usize, classes: usize, config: &TrainConfig) -> Self {
        match arch {
            Arch::Gcn => GnnModel::Gcn(GcnParams::init(input, config.hidden, classes, config.dropout, config.seed)),
            Arch::Gat => GnnModel::Gat(GatParams::init(
                input,
                config.heads,
                config.head_width(),
                classes,
                config.negative_slope,
                config.dropout,
                config.seed,
            )),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            GnnModel::Gcn(_) => Arch::Gcn,
            GnnModel::Gat(_) => Arch::Gat,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            GnnModel::Gcn(p) => p.input_dim(),
            GnnModel::Gat(p) => p.input_dim(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            GnnModel::Gcn(p) => p.classes(),
            GnnModel::Gat(p) => p.classes(),
        }
    }

    fn forward(&self, s: &Structure<T>, x: &CsrMatrix<T>, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix<T>, Cache<T>)> {
        match (self, s) {
            (GnnModel::Gcn(p), Structure::Gcn(a)) => p.forward(a, x, rng).map(|(l, c)| (l, Cache::Gcn(c))),
            (GnnModel::Gat(p), Structure::Gat(nb)) => p.forward(nb, x, rng).map(|(l, c)| (l, Cache::Gat(c))),
            _ => unreachable!("structure is built for the model's architecture"),
        }
    }

    fn backward(&self, s: &Structure<T>, cache: &Cache<T>, d_logits: &Matrix<T>) -> Result<Self> {
        match (self, s, cache) {
            (GnnModel::Gcn(p), Structure::Gcn(a), Cache::Gcn(c)) => p.backward(a, c, d_logits).map(GnnModel::Gcn),
            (GnnModel::Gat(p), Structure::Gat(nb), Cache::Gat(c)) => p.backward(nb, c, d_logits).map(GnnModel::Gat),
            _ => unreachable!("cache comes from the same architecture"),
        }
    }

    fn slices(&self) -> Vec<&[T]> {
        match self {
            GnnModel::Gcn(p) => p.slices(),
            GnnModel::Gat(p) => p.slices(),
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            GnnModel::Gcn(p) => p.slices_mut(),
            GnnModel::Gat(p) => p.slices_mut(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, Matrix<T>)> {
        match self {
            GnnModel::Gcn(p) => p.named(),
            GnnModel::Gat(p) => p.named(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, adj: &Adjacency, h: &Matrix<T>) -> Result<Matrix<T>> {
        let s = Structure::new(self.arch(), adj);
        Ok(self.forward(&s, &CsrMatrix::from_dense(h), None)?.0)
    }

    pub fn predict(&self, adj: &Adjacency, h: &Matrix<T>) -> Result<Prediction<T>> {
        Ok(Prediction::from_logits(&self.logits(adj, h)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probabilities: Matrix<T>,
    pub labels: Vec<usize>,
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter().enumerate().fold(0, |best, (c, &v)| if v > row[best] { c } else { best })
}

impl<T: Scalar> Prediction<T> {
    pub fn from_logits(logits: &Matrix<T>) -> Self {
        let probabilities = softmax_rows(logits);
        let labels = (0..logits.rows()).map(|i| argmax(logits.row(i))).collect();
        Self { probabilities, labels }
    }

    /// Fraction of `ids` whose predicted label equals the true label.
    pub fn accuracy(&self, ids: &[usize], labels: &[Option<usize>]) -> Result<f64> {
        if ids.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut correct = 0usize;
        for &i in ids {
            let y = labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidParameter(format!("node {i} has no label to evaluate against")))?;
            let p = self.labels.get(i).ok_or_else(|| Error::IndexOutOfRange(format!("node {i}")))?;
            correct += usize::from(*p == y);
        }
        Ok(correct as f64 / ids.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn check_ids(ids: &[usize], graph: &TextAttributedGraph, what: &str) -> Result<()> {
    for &i in ids {
        if i >= graph.num_nodes() {
            return Err(Error::IndexOutOfRange(format!("{what} id {i} with {} nodes", graph.num_nodes())));
        }
        if graph.label(i).is_none() {
            return Err(Error::InvalidParameter(format!("{what} node {i} is unlabeled")));
        }
    }
    Ok(())
}

/// Full-batch training with early stopping on validation accuracy (ties
/// go to the lower validation loss). Returns the best-validation
/// parameters, their predictions for every node, and the per-epoch log.
/// Without validation ids the final parameters are returned.
pub fn train_gnn<T: Scalar>(
    graph: &TextAttributedGraph,
    features: &Matrix<T>,
    num_classes: usize,
    train_ids: &[usize],
    val_ids: &[usize],
    config: &TrainConfig,
    arch: Arch,
) -> Result<(GnnModel<T>, Prediction<T>, TrainLog)> {
    config.validate()?;
    if train_ids.is_empty() {
        return Err(Error::NoLabeledNodes);
    }
    if features.rows() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            graph.num_nodes()
        )));
    }
    check_ids(train_ids, graph, "training")?;
    check_ids(val_ids, graph, "validation")?;
    if let Some(y) = train_ids.iter().chain(val_ids).filter_map(|&i| graph.label(i)).find(|&y| y >= num_classes) {
        return Err(Error::InvalidParameter(format!("label {y} with {num_classes} classes")));
    }

    let labels = graph.labels();
    let x = CsrMatrix::from_dense(features);
    let structure = Structure::new(arch, graph.adjacency());
    let mut model = GnnModel::<T>::init(arch, features.cols(), num_classes, config);
    let mut adam = Adam::new(config.learning_rate, config.weight_decay);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);

    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, GnnModel<T>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let (logits, cache) = model.forward(&structure, &x, Some(&mut dropout_rng))?;
        let (loss, d_logits) = masked_xent_loss(&logits, labels, train_ids)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let grads = model.backward(&structure, &cache, &d_logits)?;
        adam.step(&mut model.slices_mut(), &grads.slices());
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }

        let mut record = EpochRecord { epoch, train_loss: loss.as_f64(), val_loss: None, val_accuracy: None };
        if !val_ids.is_empty() {
            let (eval_logits, _) = model.forward(&structure, &x, None)?;
            let (val_loss, _) = masked_xent_loss(&eval_logits, labels, val_ids)?;
            let val_acc = Prediction::from_logits(&eval_logits).accuracy(val_ids, labels)?;
            let val_loss = val_loss.as_f64();
            record.val_loss = Some(val_loss);
            record.val_accuracy = Some(val_acc);
            let improved = match &best {
                None => true,
                Some((acc, vl, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *vl),
            };
            if improved {
                best = Some((val_acc, val_loss, model.clone()));
                log.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            log.best_epoch = epoch;
        }
        log.epochs.push(record);
        if !val_ids.is_empty() && since_best >= config.patience {
            log.stopped_early = true;
            break;
        }
    }

    let model = best.map_or(model, |(_, _, m)| m);
    let (logits, _) = model.forward(&structure, &x, None)?;
    Ok((model, Prediction::from_logits(&logits), log))
}

/// Accuracy of `model` on `ids` of `graph`.
pub fn evaluate<T: Scalar>(
    model: &GnnModel<T>,
    graph: &TextAttributedGraph,
    features: &Matrix<T>,
    ids: &[usize],
) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptyMask);
    }
    model.predict(graph.adjacency(), features)?.accuracy(ids, graph.labels())
}

/// Relative-error floor: directions whose analytic and numeric gradients
/// are both below this are compared on an absolute scale.
const GRAD_CHECK_FLOOR: f64 = 1e-6;
const GRAD_CHECK_STEP: f64 = 1e-5;

/// Largest relative error between analytic parameter gradients and
/// central finite differences of the masked loss over all labeled nodes.
/// Dropout is disabled.
pub fn grad_check(
    arch: Arch,
    adj: &Adjacency,
    features: &Matrix<f64>,
    labels: &[Option<usize>],
    num_classes: usize,
    config: &TrainConfig,
) -> Result<f64> {
    let config = TrainConfig { dropout: 0.0, ..config.clone() };
    config.validate()?;
    let mask: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let x = CsrMatrix::from_dense(features);
    let structure = Structure::new(arch, adj);
    let model = GnnModel::<f64>::init(arch, features.cols(), num_classes, &config);
    let loss_of = |m: &GnnModel<f64>| -> Result<f64> {
        let (logits, _) = m.forward(&structure, &x, None)?;
        Ok(masked_xent_loss(&logits, labels, &mask)?.0)
    };
    let (logits, cache) = model.forward(&structure, &x, None)?;
    let (_, d_logits) = masked_xent_loss(&logits, labels, &mask)?;
    let grads = model.backward(&structure, &cache, &d_logits)?;
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut worst = 0.0f64;
    for (k, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let mut plus = model.clone();
            plus.slices_mut()[k][i] += GRAD_CHECK_STEP;
            let mut minus = model.clone();
            minus.slices_mut()[k][i] -= GRAD_CHECK_STEP;
            let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * GRAD_CHECK_STEP);
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

pub fn save_model<T: Scalar>(dir: &Path, model: &GnnModel<T>, config: &TrainConfig) -> Result<()> {
    let tensors = model.named_tensors();
    let refs: Vec<(&str, &Matrix<T>)> = tensors.iter().map(|(n, m)| (*n, m)).collect();
    let heads = match model {
        GnnModel::Gcn(_) => 1,
        GnnModel::Gat(p) => p.heads(),
    };
    let meta = json!({
        "arch": model.arch(),
        "dims": {"input": model.input_dim(), "hidden": config.hidden, "classes": model.classes(), "heads": heads},
        "config": config,
        "seed": config.seed,
    });
    write_bundle(dir, &refs, meta)
}

pub fn load_model<T: Scalar>(dir: &Path) -> Result<(GnnModel<T>, TrainConfig)> {
    let (manifest, tensors) = read_bundle::<T>(dir)?;
    let arch: Arch = serde_json::from_value(manifest.meta["arch"].clone())?;
    let config: TrainConfig = serde_json::from_value(manifest.meta["config"].clone())?;
    let take = |name: &str| -> Result<Matrix<T>> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::InvalidParameter(format!("model bundle lacks tensor `{name}`")))
    };
    let vec = |name: &str| take(name).map(Matrix::into_vec);
    let model = match arch {
        Arch::Gcn => GnnModel::Gcn(GcnParams {
            w1: take("w1")?,
            b1: vec("b1")?,
            w2: take("w2")?,
            b2: vec("b2")?,
            dropout: config.dropout,
        }),
        Arch::Gat => GnnModel::Gat(GatParams {
            w1: take("w1")?,
            att_src1: take("att_src1")?,
            att_dst1: take("att_dst1")?,
            b1: vec("b1")?,
            w2: take("w2")?,
            att_src2: vec("att_src2")?,
            att_dst2: vec("att_dst2")?,
            b2: vec("b2")?,
            negative_slope: config.negative_slope,
            dropout: config.dropout,
        }),
    };
    Ok((model, config))
}
