use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BackendKind, ExperimentConfig};
use crate::embed::{embed_texts, write_embeddings, EmbeddingMatrix, EmbeddingProvenance};
use crate::error::{Error, Result, StageExt};
use crate::generate::{
    generate_for_all_classes, ChatBackend, GeneratedSample, GenerationCache, HttpBackend, MockBackend, SamplingParams,
    TemplateId,
};
use crate::gnn::{save_model, train_gnn, Arch, Precision};
use crate::graph::{
    load_graph, merge_generated_nodes, sample_few_shot_split, sample_from_fixed_split, DatasetPaths, FewShotSplit,
    FixedSplit, LabelSet, TextAttributedGraph,
};
use crate::linalg::Matrix;
use crate::link::{
    build_link_training_set, candidate_order, prefilter_candidates, score_candidates, train_edge_predictor,
    EdgePredictorParams, ScoredEdge,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Llm4ng,
    /// Generated nodes added without edges.
    Llm4ngWithoutEdges,
    Baseline,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Llm4ng => "LLM4NG",
            Method::Llm4ngWithoutEdges => "LLM4NG w/o A",
            Method::Baseline => "baseline",
        }
    }
}

/// Content hashes of the intermediate products of one seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHashes {
    pub split: String,
    pub samples: String,
    pub embeddings: String,
    pub edges: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub accuracy: f64,
    /// Size of the supervised set (raw K-shot plus generated nodes).
    pub labeled_nodes: usize,
    pub generated_nodes: usize,
    pub candidates: usize,
    pub inserted_edges: usize,
    pub best_epoch: usize,
    pub hashes: StageHashes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub config_hash: String,
    /// SHA-256 over the cache keys of every generated sample, in order.
    pub cache_keys_digest: String,
    /// Git-style (`blob <len>\0` prefixed) SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub generation_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub dataset: String,
    pub arch: Arch,
    pub k_shot: usize,
    pub m_per_class: usize,
    pub delta: f64,
    pub top_k_multiplier: usize,
    pub template: TemplateId,
    pub without_edges: bool,
    pub runs: Vec<SeedRun>,
    /// Mean test accuracy over `runs`.
    pub mean: f64,
    /// Population standard deviation of test accuracy over `runs`.
    pub std: f64,
    pub provenance: RunProvenance,
}

impl RunResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of `blob <len>\0<content>`, the object hash git uses.
pub fn git_style_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

fn json_hash<S: Serialize>(value: &S) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable"))
}

fn matrix_hash<T: Scalar>(m: &Matrix<T>) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.as_f64().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Per-class mock vocabularies: a JSON array of string arrays.
pub fn load_vocab(path: &Path) -> Result<Vec<Vec<String>>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&raw)?)
}

struct Dataset {
    graph: TextAttributedGraph,
    labels: LabelSet,
    fixed_split: Option<FixedSplit>,
    vocab: Option<Vec<Vec<String>>>,
    inputs: BTreeMap<String, String>,
    /// Digest of all input hashes.
    key: String,
}

fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let loaded = load_graph(&paths.nodes, &paths.edges, &paths.labels)?;
    let mut inputs = BTreeMap::new();
    let files = [Some(&paths.nodes), Some(&paths.edges), Some(&paths.labels), paths.vocab.as_ref(), paths.split.as_ref()];
    for p in files.into_iter().flatten() {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        inputs.insert(name, git_style_hash(&bytes));
    }
    Ok(Dataset {
        key: json_hash(&inputs),
        graph: loaded.graph,
        labels: loaded.labels,
        fixed_split: paths.split.as_deref().map(FixedSplit::load).transpose()?,
        vocab: paths.vocab.as_deref().map(load_vocab).transpose()?,
        inputs,
    })
}

/// Executes experiment cells and keeps state that is shared between them:
/// loaded datasets, open generation caches, raw-node embeddings and
/// trained edge predictors.
#[derive(Default)]
pub struct Runner {
    datasets: HashMap<DatasetPaths, Arc<Dataset>>,
    caches: HashMap<Option<PathBuf>, GenerationCache>,
    raw_embeddings: HashMap<String, Arc<EmbeddingMatrix<f64>>>,
    edge_models: HashMap<String, Arc<EdgePredictorParams<f64>>>,
    backend: Option<Arc<dyn ChatBackend>>,
    /// Number of cells actually executed (not resumed).
    pub executions: usize,
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Routes all generation through `backend` instead of the configured one.
    pub fn with_backend(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend: Some(backend), ..Self::default() }
    }

    /// The generation cache used for `path` (in-memory for `None`).
    pub fn cache(&mut self, path: Option<&Path>) -> Result<&mut GenerationCache> {
        let key = path.map(Path::to_path_buf);
        if !self.caches.contains_key(&key) {
            let cache = match path {
                Some(p) => GenerationCache::open(p)?,
                None => GenerationCache::in_memory(),
            };
            self.caches.insert(key.clone(), cache);
        }
        Ok(self.caches.get_mut(&key).expect("inserted"))
    }

    fn dataset(&mut self, cfg: &ExperimentConfig) -> Result<Arc<Dataset>> {
        let paths = cfg.dataset.paths(Path::new("."))?;
        if let Some(d) = self.datasets.get(&paths) {
            return Ok(d.clone());
        }
        let d = Arc::new(load_dataset(&paths)?);
        self.datasets.insert(paths, d.clone());
        Ok(d)
    }

    fn chat_backend(&self, cfg: &ExperimentConfig, data: &Dataset) -> Result<Arc<dyn ChatBackend>> {
        if let Some(b) = &self.backend {
            return Ok(b.clone());
        }
        Ok(match cfg.generation.backend {
            BackendKind::Mock => match &data.vocab {
                Some(v) => Arc::new(MockBackend::new(v.clone())?),
                None => Arc::new(MockBackend::from_label_texts(data.labels.texts())?),
            },
            BackendKind::Http => Arc::new(HttpBackend::from_env(cfg.generation.model.clone())),
        })
    }

    fn raw_embeddings(&mut self, cfg: &ExperimentConfig, data: &Dataset) -> Result<Arc<EmbeddingMatrix<f64>>> {
        let key = json_hash(&(&data.key, &cfg.embedder));
        if let Some(e) = self.raw_embeddings.get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(embed_texts::<f64>(data.graph.texts(), &cfg.embedder)?);
        if let Some(dir) = &cfg.artifacts_dir {
            let path = dir.join("embeddings").join(format!("{key}.bin"));
            if !path.exists() {
                let prov = EmbeddingProvenance {
                    embedder: cfg.embedder.clone(),
                    num_raw_rows: e.rows(),
                    source: Some(cfg.dataset.name.clone()),
                };
                write_embeddings(&path, &e, &prov)?;
            }
        }
        self.raw_embeddings.insert(key, e.clone());
        Ok(e)
    }

    fn edge_model(
        &mut self,
        cfg: &ExperimentConfig,
        data: &Dataset,
        raw: &EmbeddingMatrix<f64>,
        seed: u64,
    ) -> Result<Arc<EdgePredictorParams<f64>>> {
        let key = json_hash(&(&data.key, &cfg.embedder, &cfg.edge_predictor, seed));
        if let Some(p) = self.edge_models.get(&key) {
            return Ok(p.clone());
        }
        let pairs = build_link_training_set(&data.graph, seed)?;
        let (params, _) = train_edge_predictor(&pairs, raw, &cfg.edge_predictor_config(seed))?;
        let params = Arc::new(params);
        self.edge_models.insert(key, params.clone());
        Ok(params)
    }

    /// Full pipeline for every seed of `cfg`.
    pub fn run_llm4ng(&mut self, cfg: &ExperimentConfig) -> Result<RunResult> {
        let method = if cfg.m_per_class == 0 {
            Method::Baseline
        } else if cfg.without_edges {
            Method::Llm4ngWithoutEdges
        } else {
            Method::Llm4ng
        };
        self.run_cell(cfg, method)
    }

    /// Same protocol on the raw graph alone (no generated nodes).
    pub fn run_baseline(&mut self, cfg: &ExperimentConfig) -> Result<RunResult> {
        if cfg.k_shot == 0 {
            return Err(Error::NoLabeledNodes);
        }
        let cfg = ExperimentConfig { m_per_class: 0, without_edges: false, ..cfg.clone() };
        self.run_cell(&cfg, Method::Baseline)
    }

    fn run_cell(&mut self, cfg: &ExperimentConfig, method: Method) -> Result<RunResult> {
        cfg.validate().stage("config")?;
        let data = self.dataset(cfg).stage("load")?;
        let raw = self.raw_embeddings(cfg, &data).stage("embed")?;
        let config_hash = cfg.config_hash();
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        let mut cache_keys = Vec::new();
        for &seed in &cfg.seeds {
            log::info!("{} {} K={} M={} seed {seed}", cfg.dataset.name, method.label(), cfg.k_shot, cfg.m_per_class);
            let (run, keys) = self.run_seed(cfg, &data, &raw, seed, &config_hash)?;
            cache_keys.extend(keys);
            runs.push(run);
        }
        self.executions += 1;
        let (mean, std) = mean_std(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let result = RunResult {
            method,
            dataset: cfg.dataset.name.clone(),
            arch: cfg.arch,
            k_shot: cfg.k_shot,
            m_per_class: cfg.m_per_class,
            delta: cfg.delta,
            top_k_multiplier: cfg.top_k_multiplier,
            template: cfg.template,
            without_edges: cfg.without_edges,
            runs,
            mean,
            std,
            provenance: RunProvenance {
                config_hash: config_hash.clone(),
                cache_keys_digest: sha256_hex(cache_keys.join("\n").as_bytes()),
                inputs: data.inputs.clone(),
                generation_model: self.chat_backend(cfg, &data).map(|b| b.model().to_string()).unwrap_or_default(),
            },
        };
        if let Some(dir) = &cfg.artifacts_dir {
            save_result(&result_path(dir, &config_hash), &result).stage("report")?;
        }
        Ok(result)
    }

    fn run_seed(
        &mut self,
        cfg: &ExperimentConfig,
        data: &Dataset,
        raw: &EmbeddingMatrix<f64>,
        seed: u64,
        config_hash: &str,
    ) -> Result<(SeedRun, Vec<String>)> {
        let num_classes = data.labels.len();
        let split = match &data.fixed_split {
            Some(fixed) => sample_from_fixed_split(&data.graph, num_classes, fixed, cfg.k_shot, seed),
            None => sample_few_shot_split(&data.graph, num_classes, cfg.k_shot, cfg.val_size, cfg.test_size, seed),
        }
        .stage("split")?;

        let samples = self.generate(cfg, data, &split).stage("generate")?;
        let texts: Vec<String> = samples.iter().map(GeneratedSample::node_text).collect();
        let generated = if texts.is_empty() {
            EmbeddingMatrix::empty(raw.dim())
        } else {
            embed_texts::<f64>(&texts, &cfg.embedder).stage("embed")?
        };

        let (edges, candidates) = if cfg.without_edges || samples.is_empty() {
            (Vec::new(), 0)
        } else {
            self.link(cfg, data, raw, &generated, seed).stage("link")?
        };
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.gen_index, e.raw_id)).collect();
        let merged = merge_generated_nodes(&data.graph, &samples, &pairs, &data.labels).stage("merge")?;
        let n_raw = data.graph.num_raw_nodes();
        let split = split.with_generated(n_raw..n_raw + samples.len());
        let labeled = split.labeled_ids();
        if labeled.is_empty() {
            return Err(Error::NoLabeledNodes.in_stage("train"));
        }
        let features = raw.matrix().vstack(generated.matrix()).stage("merge")?;

        let train_cfg = crate::gnn::TrainConfig { seed, ..cfg.train.clone() };
        let model_dir = cfg.artifacts_dir.as_ref().map(|d| d.join("models").join(format!("{config_hash}-seed{seed}")));
        let (accuracy, best_epoch) = match cfg.train.precision {
            Precision::F64 => train_eval(&merged, &features, num_classes, &split, &train_cfg, cfg.arch, model_dir.as_deref()),
            Precision::F32 => {
                train_eval(&merged, &features.cast::<f32>(), num_classes, &split, &train_cfg, cfg.arch, model_dir.as_deref())
            }
        }
        .stage("train")?;

        if let Some(dir) = &cfg.artifacts_dir {
            write_edges(&dir.join("edges").join(format!("{config_hash}-seed{seed}.tsv")), &edges).stage("link")?;
        }
        let hashes = StageHashes {
            split: json_hash(&(&split.train_ids, &split.val_ids, &split.test_ids)),
            samples: json_hash(&samples),
            embeddings: sha256_hex(format!("{}{}", matrix_hash(raw.matrix()), matrix_hash(generated.matrix())).as_bytes()),
            edges: json_hash(&pairs),
        };
        let keys = samples.iter().map(|s| s.provenance.cache_key.clone()).collect();
        let run = SeedRun {
            seed,
            accuracy,
            labeled_nodes: labeled.len(),
            generated_nodes: samples.len(),
            candidates,
            inserted_edges: edges.len(),
            best_epoch,
            hashes,
        };
        Ok((run, keys))
    }

    fn generate(&mut self, cfg: &ExperimentConfig, data: &Dataset, split: &FewShotSplit) -> Result<Vec<GeneratedSample>> {
        if cfg.m_per_class == 0 {
            return Ok(Vec::new());
        }
        let backend = self.chat_backend(cfg, data)?;
        // P3 shows the model two labeled papers of the class.
        let exemplars: Vec<Vec<String>> = if cfg.template == TemplateId::P3 {
            (0..data.labels.len())
                .map(|c| {
                    split
                        .train_ids
                        .iter()
                        .filter(|&&i| data.graph.label(i) == Some(c))
                        .take(2)
                        .map(|&i| data.graph.text(i).to_string())
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let params = SamplingParams { temperature: cfg.generation.temperature, seed: cfg.generation.seed };
        let cache = self.cache(cfg.generation.cache.as_deref())?;
        generate_for_all_classes(
            &data.labels,
            cfg.m_per_class,
            cfg.template,
            &params,
            &exemplars,
            cfg.generation.dedup,
            backend.as_ref(),
            cache,
        )
    }

    fn link(
        &mut self,
        cfg: &ExperimentConfig,
        data: &Dataset,
        raw: &EmbeddingMatrix<f64>,
        generated: &EmbeddingMatrix<f64>,
        seed: u64,
    ) -> Result<(Vec<ScoredEdge>, usize)> {
        let k = cfg.top_k_multiplier * generated.rows();
        let mut candidates = prefilter_candidates(generated, raw, cfg.delta)?;
        let count = candidates.len();
        if candidates.is_empty() || k == 0 {
            return Ok((Vec::new(), count));
        }
        let params = self.edge_model(cfg, data, raw, seed)?;
        score_candidates(&params, generated, raw, &mut candidates)?;
        candidates.sort_by(candidate_order);
        let edges = candidates
            .iter()
            .take(k)
            .map(|c| ScoredEdge { gen_index: c.gen_index, raw_id: c.raw_id, score: c.score.expect("scored") })
            .collect();
        Ok((edges, count))
    }
}

fn train_eval<T: Scalar>(
    graph: &TextAttributedGraph,
    features: &Matrix<T>,
    num_classes: usize,
    split: &FewShotSplit,
    cfg: &crate::gnn::TrainConfig,
    arch: Arch,
    model_dir: Option<&Path>,
) -> Result<(f64, usize)> {
    let (model, pred, log) = train_gnn(graph, features, num_classes, &split.labeled_ids(), &split.val_ids, cfg, arch)?;
    if let Some(dir) = model_dir {
        save_model(dir, &model, cfg)?;
    }
    Ok((pred.accuracy(&split.test_ids, graph.labels())?, log.best_epoch))
}

pub fn write_edges(path: &Path, edges: &[ScoredEdge]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let body: String = edges.iter().map(|e| format!("{}\t{}\t{}\n", e.gen_index, e.raw_id, e.score)).collect();
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub(crate) fn result_path(artifacts: &Path, config_hash: &str) -> PathBuf {
    artifacts.join("results").join(format!("{config_hash}.json"))
}

pub(crate) fn save_result(path: &Path, result: &RunResult) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(result)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn load_result(path: &Path) -> Result<RunResult> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&raw)?)
}

/// Runs the full pipeline with a fresh [`Runner`].
pub fn run_llm4ng(cfg: &ExperimentConfig) -> Result<RunResult> {
    Runner::new().run_llm4ng(cfg)
}

/// Runs the raw-graph baseline with a fresh [`Runner`].
pub fn run_baseline(cfg: &ExperimentConfig) -> Result<RunResult> {
    Runner::new().run_baseline(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn git_style_hash_prefixes_header() {
        let direct = hex::encode(Sha256::digest(b"blob 3\0abc"));
        assert_eq!(git_style_hash(b"abc"), direct);
    }
}
