use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// Mean softmax cross-entropy over `mask` and its gradient with respect
/// to the logits (zero on rows outside the mask).
pub fn masked_xent_loss<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<(T, Matrix<T>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} logit rows", labels.len(), logits.rows())));
    }
    let classes = logits.cols();
    let scale = T::one() / T::of(mask.len() as f64);
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut loss = T::zero();
    for &i in mask {
        let y = labels
            .get(i)
            .copied()
            .flatten()
            .filter(|&y| y < classes)
            .ok_or_else(|| Error::InvalidParameter(format!("node {i} in the mask has no valid label")))?;
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
        loss += log_sum - row[y];
        let g = grad.row_mut(i);
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (row[c] - log_sum).exp();
            *gc += (p - if c == y { T::one() } else { T::zero() }) * scale;
        }
    }
    Ok((loss * scale, grad))
}
