//! Text-attributed graphs: nodes with raw text and optional class labels,
//! an undirected 0/1 edge set, and a symmetric compressed-row adjacency.

mod io;
mod split;
mod synth;

pub use io::{load_graph, write_dataset, DatasetPaths, LoadReport, LoadedDataset};
pub use split::{sample_few_shot_split, sample_from_fixed_split, FewShotSplit, FixedSplit};
pub use synth::{synth_dataset, SynthDataset, SynthParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::GeneratedSample;
use crate::linalg::{CsrMatrix, Matrix};
use crate::scalar::Scalar;

/// Ordered class-name list; the index of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    label_texts: Vec<String>,
}

impl LabelSet {
    pub fn new(label_texts: Vec<String>) -> Result<Self> {
        if label_texts.is_empty() {
            return Err(Error::InvalidParameter("label set is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &label_texts {
            if t.trim().is_empty() {
                return Err(Error::InvalidParameter("label text is empty".into()));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate label text `{t}`")));
            }
        }
        Ok(Self { label_texts })
    }

    pub fn len(&self) -> usize {
        self.label_texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_texts.is_empty()
    }

    pub fn text(&self, class_id: usize) -> &str {
        &self.label_texts[class_id]
    }

    pub fn texts(&self) -> &[String] {
        &self.label_texts
    }
}

/// Symmetric 0/1 sparsity pattern in compressed-row form, no diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut indptr = vec![0usize; n + 1];
        for i in 0..n {
            indptr[i + 1] = indptr[i] + degree[i];
        }
        let mut fill = indptr.clone();
        let mut indices = vec![0usize; indptr[n]];
        for &(u, v) in edges {
            indices[fill[u]] = v;
            fill[u] += 1;
            indices[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            indices[indptr[i]..indptr[i + 1]].sort_unstable();
        }
        Self { indptr, indices }
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Number of stored (directed) entries, twice the edge count.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_csr<T: Scalar>(&self) -> CsrMatrix<T> {
        let n = self.num_nodes();
        let triplets = (0..n).flat_map(|i| self.neighbors(i).iter().map(move |&j| (i, j, T::one()))).collect();
        CsrMatrix::from_triplets(n, n, triplets).expect("pattern indices are in range")
    }

    pub fn to_dense<T: Scalar>(&self) -> Matrix<T> {
        self.to_csr().to_dense()
    }
}

/// An immutable text-attributed graph. Generated nodes, when present,
/// occupy ids `num_raw_nodes..num_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    texts: Vec<String>,
    labels: Vec<Option<usize>>,
    edges: Vec<(usize, usize)>,
    adjacency: Adjacency,
    num_raw_nodes: usize,
}

/// Outcome of normalizing a raw edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCleanup {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

impl TextAttributedGraph {
    /// Builds a graph from texts, labels and an undirected edge list.
    ///
    /// Self-loops are dropped and duplicates (in either orientation) are
    /// collapsed; both are counted in the returned [`EdgeCleanup`].
    pub fn new(
        texts: Vec<String>,
        labels: Vec<Option<usize>>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        num_classes: usize,
    ) -> Result<(Self, EdgeCleanup)> {
        let n = texts.len();
        Self::build(texts, labels, edges, num_classes, n)
    }

    fn build(
        texts: Vec<String>,
        labels: Vec<Option<usize>>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        num_classes: usize,
        num_raw_nodes: usize,
    ) -> Result<(Self, EdgeCleanup)> {
        let n = texts.len();
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!("{n} texts but {} labels", labels.len())));
        }
        if let Some((i, c)) = labels.iter().enumerate().find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c))) {
            return Err(Error::IndexOutOfRange(format!("node {i} has label {c}, only {num_classes} classes")));
        }
        let mut cleanup = EdgeCleanup::default();
        let mut normalized = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::IndexOutOfRange(format!("edge ({u}, {v}) in a graph of {n} nodes")));
            }
            if u == v {
                cleanup.self_loops_dropped += 1;
                continue;
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        cleanup.duplicates_dropped = before - normalized.len();
        let adjacency = Adjacency::from_edges(n, &normalized);
        Ok((Self { texts, labels, edges: normalized, adjacency, num_raw_nodes }, cleanup))
    }

    pub fn num_nodes(&self) -> usize {
        self.texts.len()
    }

    pub fn num_raw_nodes(&self) -> usize {
        self.num_raw_nodes
    }

    pub fn num_generated_nodes(&self) -> usize {
        self.num_nodes() - self.num_raw_nodes
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn text(&self, id: usize) -> &str {
        &self.texts[id]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, id: usize) -> Option<usize> {
        self.labels[id]
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Same nodes and labels, different edge set. Used to derive the
    /// structure-free variant of an augmented graph.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>, num_classes: usize) -> Result<Self> {
        Self::build(self.texts.clone(), self.labels.clone(), edges, num_classes, self.num_raw_nodes).map(|(g, _)| g)
    }
}

/// Appends generated samples as labeled nodes and links each listed
/// `(generated index, raw node id)` pair.
///
/// Generated sample `i` becomes node `num_raw_nodes + i`. The raw-raw block
/// of the adjacency is left untouched.
pub fn merge_generated_nodes(
    graph: &TextAttributedGraph,
    samples: &[GeneratedSample],
    new_edges: &[(usize, usize)],
    labels: &LabelSet,
) -> Result<TextAttributedGraph> {
    if graph.num_generated_nodes() != 0 {
        return Err(Error::InvalidParameter("graph already contains generated nodes".into()));
    }
    let n_raw = graph.num_raw_nodes();
    for &(g, v) in new_edges {
        if g >= samples.len() {
            return Err(Error::IndexOutOfRange(format!("generated index {g} with {} samples", samples.len())));
        }
        if v >= n_raw {
            return Err(Error::IndexOutOfRange(format!("raw node id {v} with {n_raw} raw nodes")));
        }
    }
    let mut texts = graph.texts.clone();
    let mut node_labels = graph.labels.clone();
    for s in samples {
        if s.class_id >= labels.len() {
            return Err(Error::IndexOutOfRange(format!("sample class {} with {} classes", s.class_id, labels.len())));
        }
        texts.push(s.node_text());
        node_labels.push(Some(s.class_id));
    }
    let edges = graph.edges.iter().copied().chain(new_edges.iter().map(|&(g, v)| (n_raw + g, v)));
    TextAttributedGraph::build(texts, node_labels, edges, labels.len(), n_raw).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{Provenance, TemplateId};

    pub(crate) fn sample(class_id: usize, title: &str) -> GeneratedSample {
        GeneratedSample {
            class_id,
            title: title.into(),
            abstract_text: format!("{title} abstract"),
            provenance: Provenance {
                template_id: TemplateId::P1,
                model: "mock".into(),
                temperature: 1.0,
                seed: 0,
                replicate: 0,
                cache_key: String::new(),
            },
        }
    }

    fn path_graph(n: usize) -> (TextAttributedGraph, LabelSet) {
        let labels = LabelSet::new(vec!["a".into(), "b".into()]).unwrap();
        let texts = (0..n).map(|i| format!("node {i}")).collect();
        let y = (0..n).map(|i| Some(i % 2)).collect();
        let (g, _) = TextAttributedGraph::new(texts, y, (1..n).map(|i| (i - 1, i)), 2).unwrap();
        (g, labels)
    }

    #[test]
    fn label_set_rejects_empty_and_duplicates() {
        assert!(LabelSet::new(vec![]).is_err());
        assert!(LabelSet::new(vec!["x".into(), "x".into()]).is_err());
        assert!(LabelSet::new(vec!["x".into(), " ".into()]).is_err());
    }

    #[test]
    fn self_loops_and_duplicates_are_counted() {
        let texts = vec!["a".into(), "b".into(), "c".into()];
        let (g, cleanup) =
            TextAttributedGraph::new(texts, vec![None; 3], vec![(0, 1), (1, 0), (2, 2), (1, 2)], 1).unwrap();
        assert_eq!(cleanup, EdgeCleanup { self_loops_dropped: 1, duplicates_dropped: 1 });
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(g.adjacency().contains(1, 0) && g.adjacency().contains(0, 1));
        assert!(!g.adjacency().contains(2, 2));
    }

    #[test]
    fn merge_without_edges_appends_isolated_labeled_nodes() {
        let (g, labels) = path_graph(5);
        let samples: Vec<_> = (0..21).map(|i| sample(i % 2, &format!("t{i}"))).collect();
        let merged = merge_generated_nodes(&g, &samples, &[], &labels).unwrap();
        assert_eq!(merged.num_nodes(), 26);
        assert_eq!(merged.num_raw_nodes(), 5);
        for i in 5..26 {
            assert_eq!(merged.adjacency().degree(i), 0);
            assert_eq!(merged.label(i), Some((i - 5) % 2));
        }
        assert_eq!(merged.edges(), g.edges());
    }

    #[test]
    fn merge_inserts_edges_symmetrically() {
        let (g, labels) = path_graph(5);
        let merged = merge_generated_nodes(&g, &[sample(0, "x")], &[(0, 3)], &labels).unwrap();
        assert!(merged.adjacency().contains(5, 3));
        assert!(merged.adjacency().contains(3, 5));
    }

    #[test]
    fn merge_rejects_bad_indices() {
        let (g, labels) = path_graph(4);
        let s = [sample(0, "x")];
        assert!(matches!(merge_generated_nodes(&g, &s, &[(1, 0)], &labels), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(merge_generated_nodes(&g, &s, &[(0, 4)], &labels), Err(Error::IndexOutOfRange(_))));
        let merged = merge_generated_nodes(&g, &s, &[], &labels).unwrap();
        assert!(merge_generated_nodes(&merged, &s, &[], &labels).is_err());
    }
}
