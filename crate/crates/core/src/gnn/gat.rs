use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_features, dropout_features, ClosedNeighborhoods};
use crate::error::{Error, Result};
use crate::linalg::{dot, CsrMatrix, Matrix};
use crate::scalar::Scalar;

/// Two attention layers. Layer 1 runs `heads` independent heads of width
/// `head_width` whose outputs are concatenated and passed through ELU;
/// layer 2 is a single head producing the logits.
///
/// For node `i` attending over its closed neighborhood `N̄(i)`:
/// `e_ij = LeakyReLU(a_dst·Wh_i + a_src·Wh_j)`, `α_i· = softmax(e_i·)`,
/// `out_i = Σ_j α_ij Wh_j + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatParams<T> {
    /// `d × (heads · head_width)`; head `k` owns column block `k`.
    pub w1: Matrix<T>,
    /// `heads × head_width`
    pub att_src1: Matrix<T>,
    /// `heads × head_width`
    pub att_dst1: Matrix<T>,
    pub b1: Vec<T>,
    /// `(heads · head_width) × classes`
    pub w2: Matrix<T>,
    pub att_src2: Vec<T>,
    pub att_dst2: Vec<T>,
    pub b2: Vec<T>,
    pub negative_slope: f64,
    pub dropout: f64,
}

struct Attention<T> {
    alpha: Vec<T>,
    raw: Vec<T>,
}

pub(crate) struct GatCache<T> {
    x: CsrMatrix<T>,
    xw: Matrix<T>,
    att1: Vec<Attention<T>>,
    z1: Matrix<T>,
    h1: Matrix<T>,
    z2w: Matrix<T>,
    att2: Attention<T>,
}

/// Attention coefficients aligned with [`ClosedNeighborhoods`] entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GatAttention<T> {
    pub layer1: Vec<Vec<T>>,
    pub layer2: Vec<T>,
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

fn column_block<T: Scalar>(m: &Matrix<T>, k: usize, width: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(m.rows(), width);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[k * width..(k + 1) * width]);
    }
    out
}

fn put_block<T: Scalar>(dst: &mut Matrix<T>, k: usize, src: &Matrix<T>) {
    let width = src.cols();
    for i in 0..src.rows() {
        dst.row_mut(i)[k * width..(k + 1) * width].copy_from_slice(src.row(i));
    }
}

fn attend<T: Scalar>(
    nb: &ClosedNeighborhoods,
    wh: &Matrix<T>,
    a_src: &[T],
    a_dst: &[T],
    slope: T,
) -> (Matrix<T>, Attention<T>) {
    let n = wh.rows();
    let s_src: Vec<T> = (0..n).map(|j| dot(a_src, wh.row(j))).collect();
    let s_dst: Vec<T> = (0..n).map(|i| dot(a_dst, wh.row(i))).collect();
    let mut raw = vec![T::zero(); nb.num_entries()];
    let mut alpha = vec![T::zero(); nb.num_entries()];
    let mut out = Matrix::zeros(n, wh.cols());
    for i in 0..n {
        let span = nb.span(i);
        let mut max = T::neg_infinity();
        for (p, &j) in span.clone().zip(nb.of(i)) {
            raw[p] = s_dst[i] + s_src[j];
            max = max.max(leaky(raw[p], slope));
        }
        let mut sum = T::zero();
        for p in span.clone() {
            alpha[p] = (leaky(raw[p], slope) - max).exp();
            sum += alpha[p];
        }
        let o = out.row_mut(i);
        for (p, &j) in span.zip(nb.of(i)) {
            alpha[p] /= sum;
            for (ov, &w) in o.iter_mut().zip(wh.row(j)) {
                *ov += alpha[p] * w;
            }
        }
    }
    (out, Attention { alpha, raw })
}

/// Returns `(d_wh, d_a_src, d_a_dst)`.
fn attend_backward<T: Scalar>(
    nb: &ClosedNeighborhoods,
    wh: &Matrix<T>,
    a_src: &[T],
    a_dst: &[T],
    slope: T,
    att: &Attention<T>,
    d_out: &Matrix<T>,
) -> (Matrix<T>, Vec<T>, Vec<T>) {
    let n = wh.rows();
    let f = wh.cols();
    let mut d_wh = Matrix::zeros(n, f);
    let mut d_s_src = vec![T::zero(); n];
    let mut d_s_dst = vec![T::zero(); n];
    let mut d_alpha = Vec::new();
    for i in 0..n {
        let span = nb.span(i);
        let g = d_out.row(i);
        d_alpha.clear();
        for (p, &j) in span.clone().zip(nb.of(i)) {
            d_alpha.push(dot(g, wh.row(j)));
            for (d, &gv) in d_wh.row_mut(j).iter_mut().zip(g) {
                *d += att.alpha[p] * gv;
            }
        }
        let weighted: T = span.clone().zip(&d_alpha).fold(T::zero(), |acc, (p, &da)| acc + att.alpha[p] * da);
        for ((p, &j), &da) in span.zip(nb.of(i)).zip(&d_alpha) {
            let d_e = att.alpha[p] * (da - weighted);
            let d_raw = if att.raw[p] > T::zero() { d_e } else { d_e * slope };
            d_s_dst[i] += d_raw;
            d_s_src[j] += d_raw;
        }
    }
    let mut d_a_src = vec![T::zero(); f];
    let mut d_a_dst = vec![T::zero(); f];
    for i in 0..n {
        let row = wh.row(i);
        for c in 0..f {
            d_a_src[c] += d_s_src[i] * row[c];
            d_a_dst[c] += d_s_dst[i] * row[c];
        }
        let d = d_wh.row_mut(i);
        for c in 0..f {
            d[c] += d_s_src[i] * a_src[c] + d_s_dst[i] * a_dst[c];
        }
    }
    (d_wh, d_a_src, d_a_dst)
}

impl<T: Scalar> GatParams<T> {
    pub fn init(
        input: usize,
        heads: usize,
        head_width: usize,
        classes: usize,
        negative_slope: f64,
        dropout: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = heads * head_width;
        Self {
            w1: Matrix::glorot(input, hidden, &mut rng),
            att_src1: Matrix::glorot(heads, head_width, &mut rng),
            att_dst1: Matrix::glorot(heads, head_width, &mut rng),
            b1: vec![T::zero(); hidden],
            w2: Matrix::glorot(hidden, classes, &mut rng),
            att_src2: Matrix::glorot(1, classes, &mut rng).into_vec(),
            att_dst2: Matrix::glorot(1, classes, &mut rng).into_vec(),
            b2: vec![T::zero(); classes],
            negative_slope,
            dropout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        Self {
            w1: z(&self.w1),
            att_src1: z(&self.att_src1),
            att_dst1: z(&self.att_dst1),
            b1: vec![T::zero(); self.b1.len()],
            w2: z(&self.w2),
            att_src2: vec![T::zero(); self.att_src2.len()],
            att_dst2: vec![T::zero(); self.att_dst2.len()],
            b2: vec![T::zero(); self.b2.len()],
            negative_slope: self.negative_slope,
            dropout: self.dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn heads(&self) -> usize {
        self.att_src1.rows()
    }

    pub fn head_width(&self) -> usize {
        self.att_src1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    pub(crate) fn slices(&self) -> Vec<&[T]> {
        vec![
            self.w1.as_slice(),
            self.att_src1.as_slice(),
            self.att_dst1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.att_src2,
            &self.att_dst2,
            &self.b2,
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w1.as_mut_slice(),
            self.att_src1.as_mut_slice(),
            self.att_dst1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.att_src2,
            &mut self.att_dst2,
            &mut self.b2,
        ]
    }

    pub(crate) fn named(&self) -> Vec<(&'static str, Matrix<T>)> {
        let row = |v: &Vec<T>| Matrix::from_vec(1, v.len(), v.clone()).expect("shape");
        vec![
            ("w1", self.w1.clone()),
            ("att_src1", self.att_src1.clone()),
            ("att_dst1", self.att_dst1.clone()),
            ("b1", row(&self.b1)),
            ("w2", self.w2.clone()),
            ("att_src2", row(&self.att_src2)),
            ("att_dst2", row(&self.att_dst2)),
            ("b2", row(&self.b2)),
        ]
    }

    pub(crate) fn forward(
        &self,
        nb: &ClosedNeighborhoods,
        x: &CsrMatrix<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Matrix<T>, GatCache<T>)> {
        check_features(x, nb.num_nodes(), self.input_dim())?;
        let slope = T::of(self.negative_slope);
        let f = self.head_width();
        let x = dropout_features(x, self.dropout, rng);
        let xw = x.spmm(&self.w1)?;
        let mut z1 = Matrix::zeros(xw.rows(), xw.cols());
        let mut att1 = Vec::with_capacity(self.heads());
        for k in 0..self.heads() {
            let wh = column_block(&xw, k, f);
            let (out, att) = attend(nb, &wh, self.att_src1.row(k), self.att_dst1.row(k), slope);
            put_block(&mut z1, k, &out);
            att1.push(att);
        }
        z1.add_row_vector(&self.b1);
        let h1 = z1.map(elu);
        let z2w = h1.matmul(&self.w2)?;
        let (mut logits, att2) = attend(nb, &z2w, &self.att_src2, &self.att_dst2, slope);
        logits.add_row_vector(&self.b2);
        Ok((logits, GatCache { x, xw, att1, z1, h1, z2w, att2 }))
    }

    pub(crate) fn backward(&self, nb: &ClosedNeighborhoods, cache: &GatCache<T>, d_logits: &Matrix<T>) -> Result<Self> {
        let slope = T::of(self.negative_slope);
        let f = self.head_width();
        let b2 = d_logits.column_sums();
        let (d_z2w, att_src2, att_dst2) =
            attend_backward(nb, &cache.z2w, &self.att_src2, &self.att_dst2, slope, &cache.att2, d_logits);
        let w2 = cache.h1.t_matmul(&d_z2w)?;
        let mut d_z1 = d_z2w.matmul_t(&self.w2)?;
        for (g, &z) in d_z1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
            if z <= T::zero() {
                *g *= z.exp();
            }
        }
        let b1 = d_z1.column_sums();
        let mut d_xw = Matrix::zeros(cache.xw.rows(), cache.xw.cols());
        let mut att_src1 = Matrix::zeros(self.heads(), f);
        let mut att_dst1 = Matrix::zeros(self.heads(), f);
        for k in 0..self.heads() {
            let wh = column_block(&cache.xw, k, f);
            let d_out = column_block(&d_z1, k, f);
            let (d_wh, ds, dd) =
                attend_backward(nb, &wh, self.att_src1.row(k), self.att_dst1.row(k), slope, &cache.att1[k], &d_out);
            put_block(&mut d_xw, k, &d_wh);
            att_src1.row_mut(k).copy_from_slice(&ds);
            att_dst1.row_mut(k).copy_from_slice(&dd);
        }
        let w1 = cache.x.t_spmm(&d_xw)?;
        Ok(Self {
            w1,
            att_src1,
            att_dst1,
            b1,
            w2,
            att_src2,
            att_dst2,
            b2,
            negative_slope: self.negative_slope,
            dropout: self.dropout,
        })
    }
}

fn dense_input<T: Scalar>(params: &GatParams<T>, h: &Matrix<T>) -> Result<CsrMatrix<T>> {
    if h.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have dim {}, model expects {}",
            h.cols(),
            params.input_dim()
        )));
    }
    Ok(CsrMatrix::from_dense(h))
}

/// GAT logits for dense features. Dropout is applied only when `rng` is given.
pub fn gat_forward<T: Scalar>(
    params: &GatParams<T>,
    nb: &ClosedNeighborhoods,
    h: &Matrix<T>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Matrix<T>> {
    Ok(params.forward(nb, &dense_input(params, h)?, rng)?.0)
}

/// Attention coefficients of both layers in evaluation mode.
pub fn gat_attention<T: Scalar>(params: &GatParams<T>, nb: &ClosedNeighborhoods, h: &Matrix<T>) -> Result<GatAttention<T>> {
    let (_, cache) = params.forward(nb, &dense_input(params, h)?, None)?;
    Ok(GatAttention {
        layer1: cache.att1.into_iter().map(|a| a.alpha).collect(),
        layer2: cache.att2.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TextAttributedGraph;

    fn neighborhoods(n: usize, edges: Vec<(usize, usize)>) -> ClosedNeighborhoods {
        let g = TextAttributedGraph::new(vec![String::new(); n], vec![None; n], edges, 1).unwrap().0;
        ClosedNeighborhoods::new(g.adjacency())
    }

    #[test]
    fn lone_node_attends_to_itself() {
        let nb = neighborhoods(1, vec![]);
        let p = GatParams::<f64>::init(3, 2, 2, 2, 0.2, 0.0, 4);
        let h = Matrix::from_rows(&[vec![0.3, -0.2, 0.9]]).unwrap();
        let att = gat_attention(&p, &nb, &h).unwrap();
        assert!(att.layer1.iter().all(|a| a == &vec![1.0]));
        assert_eq!(att.layer2, vec![1.0]);
        let h1 = h.matmul(&p.w1).unwrap().map(elu);
        let expected = h1.matmul(&p.w2).unwrap();
        let logits = gat_forward(&p, &nb, &h, None).unwrap();
        assert!(logits.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let nb = neighborhoods(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        let p = GatParams::<f64>::init(4, 3, 2, 2, 0.2, 0.0, 9);
        let h = Matrix::from_vec(5, 4, (0..20).map(|i| ((i * 7 % 11) as f64) / 11.0 - 0.4).collect()).unwrap();
        let att = gat_attention(&p, &nb, &h).unwrap();
        for alpha in att.layer1.iter().chain(std::iter::once(&att.layer2)) {
            for i in 0..5 {
                let s: f64 = alpha[nb.span(i)].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
