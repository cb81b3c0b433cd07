#![allow(dead_code)]

pub mod oracle;

use llm4ng::graph::TextAttributedGraph;
use llm4ng::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with uniformly random labels in `0..classes`.
pub fn random_graph(n: usize, p: f64, classes: usize, seed: u64) -> TextAttributedGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| Some(r.random_range(0..classes))).collect();
    TextAttributedGraph::new(vec![String::new(); n], labels, edges, classes).unwrap().0
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Random unit rows.
pub fn random_unit_rows(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let m = random_matrix(rows, cols, seed);
    (0..rows)
        .map(|i| {
            let r = m.row(i);
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &Matrix<f64>) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn dense_adjacency(g: &TextAttributedGraph) -> Dense {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

pub fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

pub fn add_bias(a: &mut Dense, b: &[f64]) {
    for row in a.iter_mut() {
        for (x, &y) in row.iter_mut().zip(b) {
            *x += y;
        }
    }
}

pub fn max_diff(a: &Dense, b: &Matrix<f64>) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, Vec::len)), b.shape());
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}
