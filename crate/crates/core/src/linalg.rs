//! Row-major dense matrices and compressed-row sparse matrices.
//!
//! The products below skip zero entries of the left operand. Node features
//! built from hashed bags of words are extremely sparse, so this keeps the
//! first GNN layer and the edge-predictor input layer cheap without a
//! separate sparse-feature type. Reduction order is fixed (row by row, left
//! to right), which is what makes training bit-reproducible.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Glorot/Xavier uniform initialization.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Self {
        let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::of(rng.random_range(-limit..limit))).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows into a new matrix, in order.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut out = Self::zeros(ids.len(), self.cols);
        for (dst, &src) in ids.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns onto {}",
                other.cols, self.cols
            )));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols, data })
    }

    fn check_inner(&self, lhs_inner: usize, rhs_inner: usize, op: &str) -> Result<()> {
        if lhs_inner != rhs_inner {
            return Err(Error::DimensionMismatch(format!(
                "{op}: inner dimensions {lhs_inner} and {rhs_inner} differ"
            )));
        }
        Ok(())
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_inner(self.cols, rhs.rows, "matmul")?;
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_inner(self.rows, rhs.rows, "t_matmul")?;
        let mut out = Self::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let b_row = rhs.row(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = &mut out.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &Self) -> Result<Self> {
        self.check_inner(self.cols, rhs.cols, "matmul_t")?;
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a_row, rhs.row(j));
            }
        }
        Ok(out)
    }

    pub fn add_row_vector(&mut self, v: &[T]) {
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    /// Sum over rows, giving one value per column.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n_rows || *c >= n_cols) {
            return Err(Error::IndexOutOfRange(format!("entry ({r}, {c}) outside {n_rows}x{n_cols}")));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry exists") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self { n_rows, n_cols, indptr, indices, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |p| vals[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// `self · dense`
    pub fn spmm(&self, dense: &Matrix<T>) -> Result<Matrix<T>> {
        if self.n_cols != dense.rows() {
            return Err(Error::DimensionMismatch(format!(
                "spmm: sparse has {} columns, dense has {} rows",
                self.n_cols,
                dense.rows()
            )));
        }
        let mut out = Matrix::zeros(self.n_rows, dense.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let o_row = out.row_mut(i);
            for (&j, &a) in cols.iter().zip(vals) {
                for (o, &b) in o_row.iter_mut().zip(dense.row(j)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Nonzero entries of a dense matrix.
    pub fn from_dense(m: &Matrix<T>) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != T::zero() {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { n_rows: m.rows(), n_cols: m.cols(), indptr, indices, values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.values.len(), "value count must match the pattern");
        Self { values, ..self.clone() }
    }

    /// `selfᵀ · dense`
    pub fn t_spmm(&self, dense: &Matrix<T>) -> Result<Matrix<T>> {
        if self.n_rows != dense.rows() {
            return Err(Error::DimensionMismatch(format!(
                "t_spmm: sparse has {} rows, dense has {} rows",
                self.n_rows,
                dense.rows()
            )));
        }
        let mut out = Matrix::zeros(self.n_cols, dense.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let b_row = dense.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                for (o, &b) in out.row_mut(j).iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_each_other() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0], vec![-1.0, 4.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[-1.0, 10.0, -2.5, 4.0]);

        let at = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -3.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(at.t_matmul(&b).unwrap(), ab);

        let bt = Matrix::from_rows(&[vec![1.0, 0.5, -1.0], vec![2.0, 0.0, 4.0]]).unwrap();
        assert_eq!(a.matmul_t(&bt).unwrap(), ab);
    }

    #[test]
    fn inner_dimension_checked() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn csr_sums_duplicates_and_matches_dense() {
        let s = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (0, 0, 1.0)]).unwrap();
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.get(1, 2), 1.5);
        let d = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(s.spmm(&d).unwrap(), s.to_dense().matmul(&d).unwrap());
        let e = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap();
        assert_eq!(s.t_spmm(&e).unwrap(), s.to_dense().t_matmul(&e).unwrap());
        assert_eq!(CsrMatrix::from_dense(&s.to_dense()), s);
    }

    #[test]
    fn csr_rejects_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0f64)]).is_err());
    }
}
