use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::EmbedderConfig;
use crate::error::{Error, Result};
use crate::generate::TemplateId;
use crate::gnn::{Arch, TrainConfig};
use crate::graph::DatasetPaths;
use crate::link::EdgePredictorConfig;

/// Dataset location: a directory with the standard file names, or
/// explicit paths (which override the directory's).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn in_dir(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self { name: name.into(), dir: Some(dir.into()), nodes: None, edges: None, labels: None, vocab: None, split: None }
    }

    /// Concrete file paths, relative ones resolved against `base`.
    pub fn paths(&self, base: &Path) -> Result<DatasetPaths> {
        let from_dir = self.dir.as_ref().map(|d| DatasetPaths::in_dir(&absolute(base, d)));
        let pick = |explicit: &Option<PathBuf>, fallback: Option<PathBuf>, what: &str| -> Result<PathBuf> {
            explicit
                .as_ref()
                .map(|p| absolute(base, p))
                .or(fallback)
                .ok_or_else(|| Error::InvalidParameter(format!("dataset `{}` has no {what} file", self.name)))
        };
        Ok(DatasetPaths {
            nodes: pick(&self.nodes, from_dir.as_ref().map(|d| d.nodes.clone()), "nodes")?,
            edges: pick(&self.edges, from_dir.as_ref().map(|d| d.edges.clone()), "edges")?,
            labels: pick(&self.labels, from_dir.as_ref().map(|d| d.labels.clone()), "labels")?,
            vocab: self.vocab.as_ref().map(|p| absolute(base, p)).or(from_dir.as_ref().and_then(|d| d.vocab.clone())),
            split: self.split.as_ref().map(|p| absolute(base, p)).or(from_dir.as_ref().and_then(|d| d.split.clone())),
        })
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// Chat backend selection. Endpoint and key come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub backend: BackendKind,
    pub model: String,
    pub temperature: f64,
    /// Seed of the generation requests, independent of run seeds so all
    /// runs share one set of generated samples.
    pub seed: u64,
    pub dedup: bool,
    /// JSON-lines generation cache. In-memory when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            seed: 0,
            dedup: false,
            cache: None,
        }
    }
}

/// Edge-predictor training settings (threshold and k live at top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkTrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
}

impl Default for LinkTrainingConfig {
    fn default() -> Self {
        let d = EdgePredictorConfig::default();
        Self { epochs: d.epochs, learning_rate: d.learning_rate, weight_decay: d.weight_decay, hidden: d.hidden }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Labeled raw nodes per class.
    pub k_shot: usize,
    /// Generated samples per class.
    #[serde(default = "default_m")]
    pub m_per_class: usize,
    #[serde(default = "default_template")]
    pub template: TemplateId,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_k_mult")]
    pub top_k_multiplier: usize,
    #[serde(default)]
    pub edge_predictor: LinkTrainingConfig,
    #[serde(default = "default_arch")]
    pub arch: Arch,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub without_edges: bool,
    #[serde(default = "default_val")]
    pub val_size: usize,
    #[serde(default = "default_test")]
    pub test_size: usize,
    /// Content-addressed stage outputs and per-cell results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts_dir: Option<PathBuf>,
}

fn default_m() -> usize {
    10
}
fn default_template() -> TemplateId {
    TemplateId::P1
}
fn default_delta() -> f64 {
    0.3
}
fn default_k_mult() -> usize {
    10
}
fn default_arch() -> Arch {
    Arch::Gcn
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_val() -> usize {
    500
}
fn default_test() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig, k_shot: usize) -> Self {
        Self {
            dataset,
            k_shot,
            m_per_class: default_m(),
            template: default_template(),
            generation: GenerationConfig::default(),
            embedder: EmbedderConfig::default(),
            delta: default_delta(),
            top_k_multiplier: default_k_mult(),
            edge_predictor: LinkTrainingConfig::default(),
            arch: default_arch(),
            train: TrainConfig::default(),
            seeds: default_seeds(),
            without_edges: false,
            val_size: default_val(),
            test_size: default_test(),
            artifacts_dir: None,
        }
    }

    /// Reads a config file; relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_slice(&raw)?;
        Ok(cfg.resolved(path.parent().unwrap_or(Path::new("."))))
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let abs = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                *x = absolute(base, x);
            }
        };
        let d = &mut self.dataset;
        for p in [&mut d.dir, &mut d.nodes, &mut d.edges, &mut d.labels, &mut d.vocab, &mut d.split] {
            abs(p);
        }
        abs(&mut self.generation.cache);
        abs(&mut self.artifacts_dir);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        if self.k_shot + self.m_per_class == 0 {
            return Err(Error::NoLabeledNodes);
        }
        self.edge_predictor_config(0).validate()?;
        self.train.validate()?;
        self.embedder.validate()
    }

    pub fn edge_predictor_config(&self, seed: u64) -> EdgePredictorConfig {
        EdgePredictorConfig {
            delta: self.delta,
            top_k_multiplier: self.top_k_multiplier,
            epochs: self.edge_predictor.epochs,
            learning_rate: self.edge_predictor.learning_rate,
            weight_decay: self.edge_predictor.weight_decay,
            seed,
            hidden: self.edge_predictor.hidden,
        }
    }

    /// Hash of everything that affects results. Output locations (cache
    /// file, artifacts directory) are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.generation.cache = None;
        c.artifacts_dir = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"name": "toy", "dir": "data"}, "k_shot": 1}"#).unwrap();
        assert_eq!(cfg.m_per_class, 10);
        assert_eq!(cfg.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.delta, 0.3);
        assert_eq!(cfg.top_k_multiplier, 10);
        assert_eq!(cfg.train, TrainConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"name": "toy", "dir": "data", "split": "/abs/split.json"}, "k_shot": 1,
                "generation": {"cache": "gen.jsonl"}}"#,
        )
        .unwrap();
        let cfg = cfg.resolved(Path::new("/cfg"));
        assert_eq!(cfg.dataset.dir, Some(PathBuf::from("/cfg/data")));
        assert_eq!(cfg.dataset.split, Some(PathBuf::from("/abs/split.json")));
        assert_eq!(cfg.generation.cache, Some(PathBuf::from("/cfg/gen.jsonl")));
        let paths = cfg.dataset.paths(Path::new("/other")).unwrap();
        assert_eq!(paths.nodes, PathBuf::from("/cfg/data/nodes.jsonl"));
    }

    #[test]
    fn no_supervision_rejected() {
        let mut cfg = ExperimentConfig::new(DatasetConfig::in_dir("toy", "d"), 0);
        cfg.m_per_class = 0;
        assert!(matches!(cfg.validate(), Err(Error::NoLabeledNodes)));
    }

    #[test]
    fn hash_ignores_output_locations() {
        let a = ExperimentConfig::new(DatasetConfig::in_dir("toy", "d"), 1);
        let mut b = a.clone();
        b.artifacts_dir = Some("/tmp/x".into());
        b.generation.cache = Some("/tmp/c".into());
        assert_eq!(a.config_hash(), b.config_hash());
        b.delta = 0.4;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
