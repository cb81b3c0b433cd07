//! Node text embeddings.
//!
//! Every row is L2-normalized (zero rows stay zero), so a dot product of
//! two rows is their cosine similarity.

mod fallback;
mod http;

pub use fallback::{fallback_embed, token_bucket, tokenize};
pub use http::{HttpEmbedder, ENV_EMBED_BASE_URL};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tensor_io::{read_matrix, write_matrix, FLAG_NORMALIZED};

pub const DEFAULT_FALLBACK_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Fallback,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub provider: Provider,
    /// Output dimension of the fallback provider.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Hashing salt of the fallback provider.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

fn default_dim() -> usize {
    DEFAULT_FALLBACK_DIM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { provider: Provider::Fallback, dim: DEFAULT_FALLBACK_DIM, seed: 0, endpoint: None, model: None }
    }
}

impl EmbedderConfig {
    pub fn fallback(dim: usize, seed: u64) -> Self {
        Self { dim, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.provider == Provider::Fallback && self.dim < 8 {
            return Err(Error::InvalidParameter(format!("embedding dim {} < 8", self.dim)));
        }
        if self.provider == Provider::Http && self.model.is_none() {
            return Err(Error::InvalidParameter("http embedder needs a model name".into()));
        }
        Ok(())
    }
}

/// Dense row-per-node representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    data: Matrix<T>,
    normalized: bool,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(data: Matrix<T>, normalized: bool) -> Self {
        Self { data, normalized }
    }

    /// Normalizes every nonzero row to unit length.
    pub fn normalized(mut data: Matrix<T>) -> Self {
        for i in 0..data.rows() {
            let row = data.row_mut(i);
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::zero() {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Self { data, normalized: true }
    }

    pub fn empty(dim: usize) -> Self {
        Self { data: Matrix::zeros(0, dim), normalized: true }
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.data.row(i)
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let ids: Vec<usize> = (start..end).collect();
        Self { data: self.data.select_rows(&ids), normalized: self.normalized }
    }
}

/// Embeds `texts` in order, one row each.
pub fn embed_texts<T: Scalar>(texts: &[String], config: &EmbedderConfig) -> Result<EmbeddingMatrix<T>> {
    config.validate()?;
    match config.provider {
        Provider::Fallback => {
            let rows: Vec<Vec<T>> = texts.par_iter().map(|t| fallback_embed(t, config.dim, config.seed)).collect();
            let mut data = Vec::with_capacity(texts.len() * config.dim);
            rows.into_iter().for_each(|r| data.extend(r));
            Ok(EmbeddingMatrix::new(Matrix::from_vec(texts.len(), config.dim, data)?, true))
        }
        Provider::Http => {
            let model = config.model.as_deref().expect("validated");
            let vectors = HttpEmbedder::from_env(model, config.endpoint.as_deref()).embed(texts)?;
            let dim = vectors.first().map_or(0, Vec::len);
            let data = vectors.into_iter().flatten().map(T::of).collect();
            Ok(EmbeddingMatrix::normalized(Matrix::from_vec(texts.len(), dim, data)?))
        }
    }
}

/// Raw-node rows followed by generated-node rows, matching the node id
/// layout of an augmented graph.
pub fn assemble_representations<T: Scalar>(
    raw: &EmbeddingMatrix<T>,
    generated: &EmbeddingMatrix<T>,
) -> Result<EmbeddingMatrix<T>> {
    if raw.dim() != generated.dim() {
        return Err(Error::DimensionMismatch(format!(
            "raw embeddings have dim {}, generated have {}",
            raw.dim(),
            generated.dim()
        )));
    }
    Ok(EmbeddingMatrix { data: raw.data.vstack(&generated.data)?, normalized: raw.normalized && generated.normalized })
}

/// Sidecar metadata stored next to a persisted embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProvenance {
    pub embedder: EmbedderConfig,
    /// Rows belonging to raw nodes; the rest are generated nodes.
    pub num_raw_rows: usize,
    #[serde(default)]
    pub source: Option<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_embeddings<T: Scalar>(path: &Path, m: &EmbeddingMatrix<T>, provenance: &EmbeddingProvenance) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_matrix(path, &m.data, if m.normalized { FLAG_NORMALIZED } else { 0 })?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_vec_pretty(provenance)?).map_err(|e| Error::io(&side, e))
}

pub fn read_embeddings<T: Scalar>(path: &Path) -> Result<(EmbeddingMatrix<T>, Option<EmbeddingProvenance>)> {
    let (data, flags) = read_matrix(path)?;
    let side = sidecar_path(path);
    let provenance = if side.exists() {
        let raw = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        Some(serde_json::from_slice(&raw)?)
    } else {
        None
    };
    Ok((EmbeddingMatrix::new(data, flags & FLAG_NORMALIZED != 0), provenance))
}
