use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_features, dropout_features, NormalizedAdjacency};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::scalar::Scalar;

/// `logits = Â · ReLU(Â · dropout(X) · W1 + b1) · W2 + b2`
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub dropout: f64,
}

pub(crate) struct GcnCache<T> {
    x: CsrMatrix<T>,
    z1: Matrix<T>,
    h1: Matrix<T>,
}

impl<T: Scalar> GcnParams<T> {
    pub fn init(input: usize, hidden: usize, classes: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: Matrix::glorot(input, hidden, &mut rng),
            b1: vec![T::zero(); hidden],
            w2: Matrix::glorot(hidden, classes, &mut rng),
            b2: vec![T::zero(); classes],
            dropout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![T::zero(); self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![T::zero(); self.b2.len()],
            dropout: self.dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    pub(crate) fn slices(&self) -> Vec<&[T]> {
        vec![self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub(crate) fn named(&self) -> Vec<(&'static str, Matrix<T>)> {
        vec![
            ("w1", self.w1.clone()),
            ("b1", Matrix::from_vec(1, self.b1.len(), self.b1.clone()).expect("shape")),
            ("w2", self.w2.clone()),
            ("b2", Matrix::from_vec(1, self.b2.len(), self.b2.clone()).expect("shape")),
        ]
    }

    pub(crate) fn forward(
        &self,
        a_hat: &NormalizedAdjacency<T>,
        x: &CsrMatrix<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Matrix<T>, GcnCache<T>)> {
        check_features(x, a_hat.num_nodes(), self.input_dim())?;
        let a = a_hat.matrix();
        let x = dropout_features(x, self.dropout, rng);
        let mut z1 = a.spmm(&x.spmm(&self.w1)?)?;
        z1.add_row_vector(&self.b1);
        let h1 = z1.map(|v| v.max(T::zero()));
        let mut logits = a.spmm(&h1.matmul(&self.w2)?)?;
        logits.add_row_vector(&self.b2);
        Ok((logits, GcnCache { x, z1, h1 }))
    }

    /// Parameter gradients given the gradient of the loss with respect to
    /// the logits. `Â` is symmetric, so it is its own transpose.
    pub(crate) fn backward(
        &self,
        a_hat: &NormalizedAdjacency<T>,
        cache: &GcnCache<T>,
        d_logits: &Matrix<T>,
    ) -> Result<Self> {
        let a = a_hat.matrix();
        let b2 = d_logits.column_sums();
        let d_hw = a.spmm(d_logits)?;
        let w2 = cache.h1.t_matmul(&d_hw)?;
        let mut d_z1 = d_hw.matmul_t(&self.w2)?;
        for (g, &z) in d_z1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
            if z <= T::zero() {
                *g = T::zero();
            }
        }
        let b1 = d_z1.column_sums();
        let w1 = cache.x.t_spmm(&a.spmm(&d_z1)?)?;
        Ok(Self { w1, b1, w2, b2, dropout: self.dropout })
    }
}

/// GCN logits for dense features. Dropout is applied only when `rng` is given.
pub fn gcn_forward<T: Scalar>(
    params: &GcnParams<T>,
    a_hat: &NormalizedAdjacency<T>,
    h: &Matrix<T>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Matrix<T>> {
    if h.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have dim {}, model expects {}",
            h.cols(),
            params.input_dim()
        )));
    }
    Ok(params.forward(a_hat, &CsrMatrix::from_dense(h), rng)?.0)
}
