use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelSet, TextAttributedGraph};
use crate::error::{Error, Result};

/// File locations of one dataset.
///
/// A dataset directory holds `nodes.jsonl`, `edges.tsv` and `labels.jsonl`,
/// plus the optional `vocab.json` (per-class vocabularies for the mock
/// generator) and `split.json` (a fixed train/val/test partition).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            nodes: dir.join("nodes.jsonl"),
            edges: dir.join("edges.tsv"),
            labels: dir.join("labels.jsonl"),
            vocab: optional("vocab.json"),
            split: optional("split.json"),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            nodes: r(&self.nodes),
            edges: r(&self.edges),
            labels: r(&self.labels),
            vocab: self.vocab.as_ref().map(r),
            split: self.split.as_ref().map(r),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: TextAttributedGraph,
    pub labels: LabelSet,
    pub report: LoadReport,
}

#[derive(Deserialize)]
struct NodeRecord {
    id: i64,
    text: String,
    label: Option<i64>,
}

#[derive(Serialize)]
struct NodeRecordOut<'a> {
    id: usize,
    text: &'a str,
    label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    id: i64,
    text: String,
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e))))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#'))))
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRecord { path: path.to_path_buf(), line, reason: reason.into() }
}

fn dense_index(path: &Path, line: usize, id: i64, n: usize, seen: &mut [bool]) -> Result<usize> {
    if id < 0 || id as usize >= n {
        return Err(malformed(path, line, format!("id {id} outside 0..{n}")));
    }
    let id = id as usize;
    if std::mem::replace(&mut seen[id], true) {
        return Err(malformed(path, line, format!("duplicate id {id}")));
    }
    Ok(id)
}

fn load_labels(path: &Path) -> Result<LabelSet> {
    let mut records = Vec::new();
    for (line, text) in lines(path)? {
        let rec: LabelRecord = serde_json::from_str(&text?).map_err(|e| malformed(path, line, e.to_string()))?;
        records.push((line, rec));
    }
    let n = records.len();
    let mut seen = vec![false; n];
    let mut texts = vec![String::new(); n];
    for (line, rec) in records {
        let id = dense_index(path, line, rec.id, n, &mut seen)?;
        texts[id] = rec.text;
    }
    LabelSet::new(texts).map_err(|e| malformed(path, 0, e.to_string()))
}

/// Loads a dataset from its three files.
///
/// Edges are symmetrized and deduplicated; self-loops are dropped and
/// counted in the report.
pub fn load_graph(nodes_path: &Path, edges_path: &Path, labels_path: &Path) -> Result<LoadedDataset> {
    let labels = load_labels(labels_path)?;

    let mut records = Vec::new();
    for (line, text) in lines(nodes_path)? {
        let rec: NodeRecord =
            serde_json::from_str(&text?).map_err(|e| malformed(nodes_path, line, e.to_string()))?;
        records.push((line, rec));
    }
    let n = records.len();
    let mut seen = vec![false; n];
    let mut texts = vec![String::new(); n];
    let mut node_labels = vec![None; n];
    for (line, rec) in records {
        let id = dense_index(nodes_path, line, rec.id, n, &mut seen)?;
        if let Some(c) = rec.label {
            if c < 0 || c as usize >= labels.len() {
                return Err(malformed(nodes_path, line, format!("label {c} outside 0..{}", labels.len())));
            }
            node_labels[id] = Some(c as usize);
        }
        texts[id] = rec.text;
    }

    let mut edges = Vec::new();
    for (line, text) in lines(edges_path)? {
        let text = text?;
        let mut fields = text.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(malformed(edges_path, line, "expected `u<TAB>v`"));
        };
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| malformed(edges_path, line, format!("non-integer id `{s}`")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= n || v >= n {
            return Err(Error::DanglingEdge { path: edges_path.to_path_buf(), line, u, v });
        }
        edges.push((u, v));
    }

    let (graph, cleanup) = TextAttributedGraph::new(texts, node_labels, edges, labels.len())?;
    if cleanup.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop(s) from {}", cleanup.self_loops_dropped, edges_path.display());
    }
    let report =
        LoadReport { self_loops_dropped: cleanup.self_loops_dropped, duplicate_edges_dropped: cleanup.duplicates_dropped };
    Ok(LoadedDataset { graph, labels, report })
}

/// Writes `nodes.jsonl`, `edges.tsv` and `labels.jsonl` into `dir`.
pub fn write_dataset(dir: &Path, graph: &TextAttributedGraph, labels: &LabelSet) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths {
        nodes: dir.join("nodes.jsonl"),
        edges: dir.join("edges.tsv"),
        labels: dir.join("labels.jsonl"),
        vocab: None,
        split: None,
    };
    let open = |p: &Path| fs::File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));

    let mut w = open(&paths.nodes)?;
    for id in 0..graph.num_nodes() {
        let rec = NodeRecordOut { id, text: graph.text(id), label: graph.label(id) };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(&paths.nodes, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.nodes, e))?;

    let mut w = open(&paths.edges)?;
    for &(u, v) in graph.edges() {
        writeln!(w, "{u}\t{v}").map_err(|e| Error::io(&paths.edges, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.edges, e))?;

    let mut w = open(&paths.labels)?;
    for (id, text) in labels.texts().iter().enumerate() {
        serde_json::to_writer(&mut w, &LabelRecord { id: id as i64, text: text.clone() })?;
        w.write_all(b"\n").map_err(|e| Error::io(&paths.labels, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.labels, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, nodes: &str, edges: &str, labels: &str) -> DatasetPaths {
        fs::write(dir.join("nodes.jsonl"), nodes).unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("labels.jsonl"), labels).unwrap();
        DatasetPaths::in_dir(dir)
    }

    const NODES3: &str = concat!(
        r#"{"id": 0, "text": "alpha", "label": 0}"#,
        "\n",
        r#"{"id": 2, "text": "gamma", "label": null}"#,
        "\n",
        r#"{"id": 1, "text": "beta", "label": 1}"#,
        "\n"
    );
    const LABELS2: &str = "{\"id\": 0, \"text\": \"Theory\"}\n{\"id\": 1, \"text\": \"Rule Learning\"}\n";

    #[test]
    fn three_node_file_is_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_files(dir.path(), NODES3, "0\t1\n", LABELS2);
        let d = load_graph(&p.nodes, &p.edges, &p.labels).unwrap();
        let dense = d.graph.adjacency().to_dense::<f64>();
        let nonzero: Vec<_> =
            (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|&(i, j)| dense[(i, j)] != 0.0).collect();
        assert_eq!(nonzero, vec![(0, 1), (1, 0)]);
        assert_eq!(d.graph.num_raw_nodes(), 3);
        assert_eq!(d.graph.text(2), "gamma");
        assert_eq!(d.graph.label(2), None);
        assert_eq!(d.labels.text(1), "Rule Learning");
    }

    #[test]
    fn self_loop_is_dropped_and_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_files(dir.path(), NODES3, "0\t0\n0\t1\n1\t0\n", LABELS2);
        let d = load_graph(&p.nodes, &p.edges, &p.labels).unwrap();
        assert_eq!(d.report.self_loops_dropped, 1);
        assert_eq!(d.report.duplicate_edges_dropped, 1);
        assert_eq!(d.graph.num_edges(), 1);
    }

    #[test]
    fn dangling_edge_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_files(dir.path(), NODES3, "0\t7\n", LABELS2);
        let err = load_graph(&p.nodes, &p.edges, &p.labels).unwrap_err();
        assert!(matches!(err, Error::DanglingEdge { line: 1, u: 0, v: 7, .. }), "{err}");
    }

    #[test]
    fn malformed_records_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        for (nodes, edges) in [
            (NODES3, "0\tx\n"),
            (NODES3, "0 1\n"),
            ("{\"id\": 5, \"text\": \"a\", \"label\": 0}\n", ""),
            ("{\"id\": 0, \"text\": \"a\", \"label\": 9}\n", ""),
            ("not json\n", ""),
        ] {
            let p = write_files(dir.path(), nodes, edges, LABELS2);
            let err = load_graph(&p.nodes, &p.edges, &p.labels).unwrap_err();
            assert!(matches!(err, Error::MalformedRecord { .. }), "{nodes:?} {edges:?}: {err}");
        }
    }

    #[test]
    fn write_then_load_preserves_graph() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_files(dir.path(), NODES3, "0\t1\n2\t1\n", LABELS2);
        let d = load_graph(&p.nodes, &p.edges, &p.labels).unwrap();
        let out = tempfile::tempdir().unwrap();
        let q = write_dataset(out.path(), &d.graph, &d.labels).unwrap();
        let e = load_graph(&q.nodes, &q.edges, &q.labels).unwrap();
        assert_eq!(e.graph, d.graph);
        assert_eq!(e.labels, d.labels);
    }
}
