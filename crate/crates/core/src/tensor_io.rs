//! Flat binary tensor files.
//!
//! Layout: three little-endian `u64` header words `{rows, cols, flags}`
//! followed by `rows * cols` little-endian `f32` values in row-major order.
//! Parameter bundles are directories of such files plus a `manifest.json`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FLAG_NORMALIZED: u64 = 1;

const HEADER_BYTES: usize = 24;

pub fn write_matrix<T: Scalar>(path: &Path, m: &Matrix<T>, flags: u64) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(HEADER_BYTES + m.as_slice().len() * 4);
    for word in [m.rows() as u64, m.cols() as u64, flags] {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for v in m.as_slice() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_matrix<T: Scalar>(path: &Path) -> Result<(Matrix<T>, u64)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::MalformedRecord { path: path.to_path_buf(), line: 0, reason };
    if bytes.len() < HEADER_BYTES {
        return Err(malformed("file shorter than header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    let (rows, cols, flags) = (word(0) as usize, word(1) as usize, word(2));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| malformed("header dimensions overflow".into()))?;
    let body = &bytes[HEADER_BYTES..];
    if body.len() != expected {
        return Err(malformed(format!("{rows}x{cols} needs {expected} payload bytes, found {}", body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    Ok((Matrix::from_vec(rows, cols, data)?, flags))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BundleManifest {
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata (architecture, dims, config, seed).
    pub meta: serde_json::Value,
}

/// Writes named tensors as `<dir>/<name>.bin` plus `<dir>/manifest.json`.
pub fn write_bundle<T: Scalar>(dir: &Path, tensors: &[(&str, &Matrix<T>)], meta: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, m) in tensors {
        let file = format!("{name}.bin");
        write_matrix(&dir.join(&file), m, 0)?;
        entries.push(TensorEntry { name: (*name).to_string(), file, rows: m.rows(), cols: m.cols() });
    }
    let manifest = BundleManifest { tensors: entries, meta };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_bundle<T: Scalar>(dir: &Path) -> Result<(BundleManifest, Vec<(String, Matrix<T>)>)> {
    let path: PathBuf = dir.join("manifest.json");
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: BundleManifest = serde_json::from_slice(&raw)?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let (m, _) = read_matrix(&dir.join(&entry.file))?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::DimensionMismatch(format!(
                "tensor {} is {:?}, manifest says {}x{}",
                entry.name,
                m.shape(),
                entry.rows,
                entry.cols
            )));
        }
        out.push((entry.name.clone(), m));
    }
    Ok((manifest, out))
}
