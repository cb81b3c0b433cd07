//! Two-layer perceptron over concatenated endpoint embeddings.
//!
//! The input weight matrix of `MLP(h_u ‖ h_v)` is stored as two `d × h`
//! halves, one per endpoint. Per epoch each half is applied to every node
//! once (`H · W`), and a pair's hidden pre-activation is the sum of two
//! precomputed rows. This keeps training linear in the number of pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EdgeCandidate, LabeledPair};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::Adam;
use crate::scalar::Scalar;

/// Hidden width used when the configuration leaves it open: the
/// embedding dimension, capped at this value.
pub const DEFAULT_HIDDEN_CAP: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePredictorConfig {
    /// Similarity threshold for candidate pairs.
    pub delta: f64,
    /// Edges kept = multiplier × number of generated samples.
    pub top_k_multiplier: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
}

impl Default for EdgePredictorConfig {
    fn default() -> Self {
        Self {
            delta: 0.3,
            top_k_multiplier: 10,
            epochs: 200,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            seed: 0,
            hidden: None,
        }
    }
}

impl EdgePredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!("delta {} outside [0, 1)", self.delta)));
        }
        if self.hidden == Some(0) {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden_for(&self, dim: usize) -> usize {
        self.hidden.unwrap_or(dim.min(DEFAULT_HIDDEN_CAP)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgePredictorParams<T> {
    /// Input weights applied to the first endpoint, `d × h`.
    pub w_first: Matrix<T>,
    /// Input weights applied to the second endpoint, `d × h`.
    pub w_second: Matrix<T>,
    pub b_hidden: Vec<T>,
    pub w_out: Vec<T>,
    pub b_out: T,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `-[y ln σ(s) + (1-y) ln(1-σ(s))]`, computed without overflow.
fn bce_with_logit<T: Scalar>(s: T, y: T) -> T {
    s.max(T::zero()) - s * y + (T::one() + (-s.abs()).exp()).ln()
}

impl<T: Scalar> EdgePredictorParams<T> {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            w_first: Matrix::zeros(dim, hidden),
            w_second: Matrix::zeros(dim, hidden),
            b_hidden: vec![T::zero(); hidden],
            w_out: vec![T::zero(); hidden],
            b_out: T::zero(),
        }
    }

    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Matrix::glorot(2 * dim, hidden, &mut rng);
        let (first, second) = input.as_slice().split_at(dim * hidden);
        let out = Matrix::<T>::glorot(hidden, 1, &mut rng);
        Self {
            w_first: Matrix::from_vec(dim, hidden, first.to_vec()).expect("shape"),
            w_second: Matrix::from_vec(dim, hidden, second.to_vec()).expect("shape"),
            b_hidden: vec![T::zero(); hidden],
            w_out: out.into_vec(),
            b_out: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_first.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_first.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w_first.is_finite()
            && self.w_second.is_finite()
            && self.b_hidden.iter().chain(&self.w_out).all(|v| v.is_finite())
            && self.b_out.is_finite()
    }

    /// Output logit given the two projected endpoint rows.
    fn logit(&self, first_proj: &[T], second_proj: &[T]) -> T {
        let mut s = self.b_out;
        for j in 0..self.hidden() {
            let pre = first_proj[j] + second_proj[j] + self.b_hidden[j];
            if pre > T::zero() {
                s += pre * self.w_out[j];
            }
        }
        s
    }

    /// Named tensors for persistence.
    pub fn tensors(&self) -> Vec<(&'static str, Matrix<T>)> {
        vec![
            ("w_first", self.w_first.clone()),
            ("w_second", self.w_second.clone()),
            ("b_hidden", Matrix::from_vec(1, self.hidden(), self.b_hidden.clone()).expect("shape")),
            ("w_out", Matrix::from_vec(self.hidden(), 1, self.w_out.clone()).expect("shape")),
            ("b_out", Matrix::from_vec(1, 1, vec![self.b_out]).expect("shape")),
        ]
    }
}

/// Edge probability averaged over both concatenation orders, so the result
/// does not depend on argument order.
pub fn predict_pair<T: Scalar>(params: &EdgePredictorParams<T>, h_u: &[T], h_v: &[T]) -> Result<f64> {
    let d = params.dim();
    if h_u.len() != d || h_v.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "predictor expects dim {d}, got {} and {}",
            h_u.len(),
            h_v.len()
        )));
    }
    let project = |x: &[T], w: &Matrix<T>| -> Vec<T> {
        (0..params.hidden()).map(|j| (0..d).fold(T::zero(), |acc, i| acc + x[i] * w[(i, j)])).collect()
    };
    let forward = params.logit(&project(h_u, &params.w_first), &project(h_v, &params.w_second));
    let backward = params.logit(&project(h_v, &params.w_first), &project(h_u, &params.w_second));
    Ok(((sigmoid(forward) + sigmoid(backward)) / T::of(2.0)).as_f64())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkTrainLog {
    /// Mean loss before each epoch's update.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`.
    pub best_so_far: Vec<f64>,
}

fn check_pairs<T: Scalar>(pairs: &[LabeledPair], h: &EmbeddingMatrix<T>) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.u >= h.rows() || p.v >= h.rows()) {
        return Err(Error::IndexOutOfRange(format!("pair ({}, {}) with {} embedding rows", p.u, p.v, h.rows())));
    }
    Ok(())
}

/// Full-batch Adam on binary cross-entropy over both orientations of every
/// pair. Deterministic for a given `(pairs, embeddings, config)`.
pub fn train_edge_predictor<T: Scalar>(
    pairs: &[LabeledPair],
    h: &EmbeddingMatrix<T>,
    config: &EdgePredictorConfig,
) -> Result<(EdgePredictorParams<T>, LinkTrainLog)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no training pairs".into()));
    }
    check_pairs(pairs, h)?;
    let x = h.matrix();
    let hidden = config.hidden_for(h.dim());
    let mut params = EdgePredictorParams::<T>::init(h.dim(), hidden, config.seed);
    let mut adam = Adam::new(config.learning_rate, config.weight_decay);
    let mut log = LinkTrainLog::default();
    let n_terms = T::of((2 * pairs.len()) as f64);

    for epoch in 0..config.epochs {
        let p = x.matmul(&params.w_first)?;
        let q = x.matmul(&params.w_second)?;
        let mut dp = Matrix::<T>::zeros(x.rows(), hidden);
        let mut dq = Matrix::<T>::zeros(x.rows(), hidden);
        let mut g_b_hidden = vec![T::zero(); hidden];
        let mut g_w_out = vec![T::zero(); hidden];
        let mut g_b_out = T::zero();
        let mut loss = T::zero();
        let mut pre = vec![T::zero(); hidden];

        for pair in pairs {
            let y = T::of(pair.label as f64);
            for (a, b) in [(pair.u, pair.v), (pair.v, pair.u)] {
                let (pa, qb) = (p.row(a), q.row(b));
                let mut s = params.b_out;
                for j in 0..hidden {
                    pre[j] = pa[j] + qb[j] + params.b_hidden[j];
                    if pre[j] > T::zero() {
                        s += pre[j] * params.w_out[j];
                    }
                }
                loss += bce_with_logit(s, y);
                let ds = (sigmoid(s) - y) / n_terms;
                g_b_out += ds;
                for j in 0..hidden {
                    if pre[j] > T::zero() {
                        g_w_out[j] += ds * pre[j];
                        let dpre = ds * params.w_out[j];
                        g_b_hidden[j] += dpre;
                        dp[(a, j)] += dpre;
                        dq[(b, j)] += dpre;
                    }
                }
            }
        }
        let loss = loss / n_terms;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let loss = loss.as_f64();
        let best = log.best_so_far.last().map_or(loss, |&b: &f64| b.min(loss));
        log.losses.push(loss);
        log.best_so_far.push(best);

        let g_first = x.t_matmul(&dp)?;
        let g_second = x.t_matmul(&dq)?;
        let mut b_out = [params.b_out];
        adam.step(
            &mut [
                params.w_first.as_mut_slice(),
                params.w_second.as_mut_slice(),
                &mut params.b_hidden,
                &mut params.w_out,
                &mut b_out,
            ],
            &[g_first.as_slice(), g_second.as_slice(), &g_b_hidden, &g_w_out, &[g_b_out]],
        );
        params.b_out = b_out[0];
        if !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok((params, log))
}

struct Projections<T> {
    first: Matrix<T>,
    second: Matrix<T>,
}

fn project<T: Scalar>(params: &EdgePredictorParams<T>, h: &EmbeddingMatrix<T>) -> Result<Projections<T>> {
    if h.dim() != params.dim() {
        return Err(Error::DimensionMismatch(format!("predictor dim {}, embeddings dim {}", params.dim(), h.dim())));
    }
    Ok(Projections { first: h.matrix().matmul(&params.w_first)?, second: h.matrix().matmul(&params.w_second)? })
}

/// Scores every candidate in place (symmetrized probability).
pub fn score_candidates<T: Scalar>(
    params: &EdgePredictorParams<T>,
    generated: &EmbeddingMatrix<T>,
    raw: &EmbeddingMatrix<T>,
    candidates: &mut [EdgeCandidate],
) -> Result<()> {
    if let Some(c) = candidates.iter().find(|c| c.gen_index >= generated.rows() || c.raw_id >= raw.rows()) {
        return Err(Error::IndexOutOfRange(format!("candidate ({}, {})", c.gen_index, c.raw_id)));
    }
    let g = project(params, generated)?;
    let v = project(params, raw)?;
    candidates.par_iter_mut().for_each(|c| {
        let forward = params.logit(g.first.row(c.gen_index), v.second.row(c.raw_id));
        let backward = params.logit(v.first.row(c.raw_id), g.second.row(c.gen_index));
        c.score = Some(((sigmoid(forward) + sigmoid(backward)) / T::of(2.0)).as_f64());
    });
    Ok(())
}

/// Fraction of pairs whose symmetrized probability falls on the correct
/// side of 0.5.
pub fn pair_accuracy<T: Scalar>(
    params: &EdgePredictorParams<T>,
    h: &EmbeddingMatrix<T>,
    pairs: &[LabeledPair],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    check_pairs(pairs, h)?;
    let pr = project(params, h)?;
    let correct = pairs
        .iter()
        .filter(|p| {
            let f = sigmoid(params.logit(pr.first.row(p.u), pr.second.row(p.v)));
            let b = sigmoid(params.logit(pr.first.row(p.v), pr.second.row(p.u)));
            let prob = ((f + b) / T::of(2.0)).as_f64();
            (prob > 0.5) == (p.label == 1)
        })
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_one_half() {
        let p = EdgePredictorParams::<f64>::zeros(3, 2);
        assert_eq!(predict_pair(&p, &[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // d = 2, h = 1. first-endpoint weights (1, 2), second (-1, 0.5),
        // hidden bias 0.1, output weight 2, output bias -0.5.
        let p = EdgePredictorParams {
            w_first: Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap(),
            w_second: Matrix::from_vec(2, 1, vec![-1.0, 0.5]).unwrap(),
            b_hidden: vec![0.1],
            w_out: vec![2.0],
            b_out: -0.5,
        };
        let (u, v) = ([0.6, 0.8], [1.0, 0.0]);
        // u‖v: 0.6 + 1.6 - 1.0 + 0 + 0.1 = 1.3 -> relu 1.3 -> 2.6 - 0.5 = 2.1
        // v‖u: 1.0 + 0 - 0.6 + 0.4 + 0.1 = 0.9 -> relu 0.9 -> 1.8 - 0.5 = 1.3
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = (sig(2.1) + sig(1.3)) / 2.0;
        assert!((predict_pair(&p, &u, &v).unwrap() - expected).abs() < 1e-15);
        assert_eq!(predict_pair(&p, &u, &v).unwrap(), predict_pair(&p, &v, &u).unwrap());
    }

    #[test]
    fn dimension_checked() {
        let p = EdgePredictorParams::<f64>::zeros(3, 2);
        assert!(matches!(predict_pair(&p, &[1.0], &[1.0, 2.0, 3.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn stable_bce() {
        assert!((bce_with_logit(0.0f64, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logit(800.0f64, 0.0).is_finite());
        assert!(bce_with_logit(-800.0f64, 1.0).is_finite());
    }
}
