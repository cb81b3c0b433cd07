//! Append-only JSON-lines store of every chat request and its completion.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{ChatMessage, SamplingParams};
use super::TemplateId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub template_id: TemplateId,
    /// `None` for requests that cover every class at once (P4).
    pub class_id: Option<usize>,
    /// Last user turn of the request.
    pub prompt: String,
    pub model: String,
    pub params: SamplingParams,
    pub replicate: usize,
    pub completion: String,
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    /// Exact request body as sent (or as it would be sent) on the wire.
    #[serde(default)]
    pub request: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    template_id: TemplateId,
    messages: &'a [ChatMessage],
    model: &'a str,
    params: &'a SamplingParams,
    replicate: usize,
}

/// Hex SHA-256 over the canonical JSON of the key fields.
pub fn cache_key(
    template_id: TemplateId,
    messages: &[ChatMessage],
    model: &str,
    params: &SamplingParams,
    replicate: usize,
) -> String {
    let material = KeyMaterial { template_id, messages, model, params, replicate };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// In-memory index over an optional backing file. Records are only ever
/// appended; an existing key is never rewritten.
#[derive(Debug, Default)]
pub struct GenerationCache {
    path: Option<PathBuf>,
    records: Vec<CacheRecord>,
    index: HashMap<String, usize>,
    stats: CacheStats,
}

impl GenerationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates on first write) a cache file.
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = Self { path: Some(path.to_path_buf()), ..Self::default() };
        if path.exists() {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                if !cache.index.contains_key(&rec.key) {
                    cache.index.insert(rec.key.clone(), cache.records.len());
                    cache.records.push(rec);
                }
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CacheRecord] {
        &self.records
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn get(&mut self, key: &str) -> Option<&CacheRecord> {
        match self.index.get(key) {
            Some(&i) => {
                self.stats.hits += 1;
                Some(&self.records[i])
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    /// Lookup that does not touch the hit/miss counters.
    pub fn peek(&self, key: &str) -> Option<&CacheRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    /// Appends a record. Returns `false` (and writes nothing) if the key is
    /// already present.
    pub fn insert(&mut self, record: CacheRecord) -> Result<bool> {
        if self.index.contains_key(&record.key) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        self.index.insert(record.key.clone(), self.records.len());
        self.records.push(record);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str, completion: &str) -> CacheRecord {
        CacheRecord {
            key: key.into(),
            template_id: TemplateId::P1,
            class_id: Some(0),
            prompt: "p".into(),
            model: "mock".into(),
            params: SamplingParams::default(),
            replicate: 0,
            completion: completion.into(),
            title: None,
            abstract_text: None,
            request: String::new(),
        }
    }

    #[test]
    fn key_depends_on_every_field() {
        let m = vec![ChatMessage::user("hello")];
        let p = SamplingParams::default();
        let base = cache_key(TemplateId::P1, &m, "mock", &p, 0);
        assert_eq!(base.len(), 64);
        assert_eq!(base, cache_key(TemplateId::P1, &m, "mock", &p, 0));
        assert_ne!(base, cache_key(TemplateId::P2, &m, "mock", &p, 0));
        assert_ne!(base, cache_key(TemplateId::P1, &[ChatMessage::user("hello!")], "mock", &p, 0));
        assert_ne!(base, cache_key(TemplateId::P1, &m, "gpt", &p, 0));
        assert_ne!(base, cache_key(TemplateId::P1, &m, "mock", &SamplingParams { seed: 1, ..p.clone() }, 0));
        assert_ne!(base, cache_key(TemplateId::P1, &m, "mock", &p, 1));
    }

    #[test]
    fn append_only_and_reloadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let mut c = GenerationCache::open(&path).unwrap();
        assert!(c.insert(record("a", "first")).unwrap());
        assert!(!c.insert(record("a", "second")).unwrap());
        assert!(c.insert(record("b", "x")).unwrap());
        let bytes = fs::read(&path).unwrap();

        let mut reopened = GenerationCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("a").unwrap().completion, "first");
        assert!(reopened.get("zzz").is_none());
        assert_eq!(reopened.stats(), CacheStats { hits: 1, misses: 1 });
        assert!(!reopened.insert(record("b", "y")).unwrap());
        assert_eq!(fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn record_schema_field_names() {
        let v = serde_json::to_value(record("k", "c")).unwrap();
        for field in
            ["key", "template_id", "class_id", "prompt", "model", "params", "replicate", "completion", "title", "abstract"]
        {
            assert!(v.get(field).is_some(), "missing {field}");
        }
    }
}
