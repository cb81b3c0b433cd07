//! Dense brute-force reference implementations.

use std::collections::HashSet;

use llm4ng::embed::EmbeddingMatrix;
use llm4ng::gnn::{GatParams, GcnParams};
use llm4ng::graph::TextAttributedGraph;
use llm4ng::link::EdgeCandidate;
use llm4ng::linalg::Matrix;
use rand::Rng;

use super::*;

pub fn dense_normalized(g: &TextAttributedGraph) -> Dense {
    let mut a = dense_adjacency(g);
    let n = a.len();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n).map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect()).collect()
}

pub fn random_gcn(d: usize, h: usize, c: usize, seed: u64) -> GcnParams<f64> {
    GcnParams {
        w1: random_matrix(d, h, seed),
        b1: random_vec(h, seed + 1),
        w2: random_matrix(h, c, seed + 2),
        b2: random_vec(c, seed + 3),
        dropout: 0.0,
    }
}

pub fn random_gat(d: usize, heads: usize, f: usize, c: usize, seed: u64) -> GatParams<f64> {
    GatParams {
        w1: random_matrix(d, heads * f, seed),
        att_src1: random_matrix(heads, f, seed + 1),
        att_dst1: random_matrix(heads, f, seed + 2),
        b1: random_vec(heads * f, seed + 3),
        w2: random_matrix(heads * f, c, seed + 4),
        att_src2: random_vec(c, seed + 5),
        att_dst2: random_vec(c, seed + 6),
        b2: random_vec(c, seed + 7),
        negative_slope: 0.2,
        dropout: 0.0,
    }
}

pub fn dense_gcn(p: &GcnParams<f64>, g: &TextAttributedGraph, h: &Matrix<f64>) -> Dense {
    let a = dense_normalized(g);
    let mut z1 = mm(&a, &mm(&to_dense(h), &to_dense(&p.w1)));
    add_bias(&mut z1, &p.b1);
    let h1: Dense = z1.iter().map(|r| r.iter().map(|&x| x.max(0.0)).collect()).collect();
    let mut out = mm(&a, &mm(&h1, &to_dense(&p.w2)));
    add_bias(&mut out, &p.b2);
    out
}

/// One attention head over the closed neighborhoods of a dense adjacency.
/// Returns outputs and the attention matrix.
pub fn dense_head(adj: &Dense, wh: &Dense, a_src: &[f64], a_dst: &[f64], slope: f64) -> (Dense, Dense) {
    let n = adj.len();
    let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut att = vec![vec![0.0; n]; n];
    let mut out = vec![vec![0.0; wh[0].len()]; n];
    for i in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&j| j == i || adj[i][j] != 0.0).collect();
        let e: Vec<f64> = nbrs
            .iter()
            .map(|&j| {
                let x = dotp(a_dst, &wh[i]) + dotp(a_src, &wh[j]);
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            })
            .collect();
        let z: f64 = e.iter().map(|x| x.exp()).sum();
        for (t, &j) in nbrs.iter().enumerate() {
            att[i][j] = e[t].exp() / z;
            for c in 0..wh[0].len() {
                out[i][c] += att[i][j] * wh[j][c];
            }
        }
    }
    (out, att)
}

pub fn dense_gat(p: &GatParams<f64>, g: &TextAttributedGraph, h: &Matrix<f64>) -> (Dense, Vec<Dense>) {
    let adj = dense_adjacency(g);
    let xw = mm(&to_dense(h), &to_dense(&p.w1));
    let f = p.att_src1.cols();
    let heads = p.att_src1.rows();
    let mut z1 = vec![Vec::new(); adj.len()];
    let mut atts = Vec::new();
    for k in 0..heads {
        let wh: Dense = xw.iter().map(|r| r[k * f..(k + 1) * f].to_vec()).collect();
        let (o, a) = dense_head(&adj, &wh, p.att_src1.row(k), p.att_dst1.row(k), p.negative_slope);
        for (row, part) in z1.iter_mut().zip(o) {
            row.extend(part);
        }
        atts.push(a);
    }
    add_bias(&mut z1, &p.b1);
    let h1: Dense = z1.iter().map(|r| r.iter().map(|&x| if x > 0.0 { x } else { x.exp() - 1.0 }).collect()).collect();
    let (mut out, a2) = dense_head(&adj, &mm(&h1, &to_dense(&p.w2)), &p.att_src2, &p.att_dst2, p.negative_slope);
    add_bias(&mut out, &p.b2);
    atts.push(a2);
    (out, atts)
}

pub fn unit_embeddings(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix<f64> {
    EmbeddingMatrix::new(Matrix::from_rows(&random_unit_rows(rows, dim, seed)).unwrap(), true)
}

/// Candidate pairs with dot product above `delta`, row-major.
pub fn brute_prefilter(hg: &EmbeddingMatrix<f64>, hv: &EmbeddingMatrix<f64>, delta: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..hg.rows() {
        for j in 0..hv.rows() {
            let sim: f64 = hg.row(i).iter().zip(hv.row(j)).map(|(a, b)| a * b).sum();
            if sim > delta {
                out.push((i, j, sim));
            }
        }
    }
    out
}

pub fn random_candidates(n: usize, seed: u64) -> Vec<EdgeCandidate> {
    let mut r = rng(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let (g, v) = (r.random_range(0..12), r.random_range(0..20));
        if seen.insert((g, v)) {
            // Coarse grids force duplicate scores and similarities.
            let score = r.random_range(0..8) as f64 / 8.0 + 0.01;
            let similarity = r.random_range(0..4) as f64 / 4.0;
            out.push(EdgeCandidate { gen_index: g, raw_id: v, similarity, score: Some(score) });
        }
    }
    out
}

pub fn brute_top_k(c: &[EdgeCandidate], k: usize) -> Vec<(usize, usize)> {
    let mut keyed: Vec<(f64, f64, usize, usize)> =
        c.iter().map(|c| (c.score.unwrap(), c.similarity, c.gen_index, c.raw_id)).collect();
    keyed.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3))
    });
    keyed.into_iter().take(k).map(|t| (t.2, t.3)).collect()
}

