use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_EMBED_BASE_URL: &str = "LLM4NG_EMBED_BASE_URL";

const BATCH: usize = 64;

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Client for `POST {base}/embeddings`.
pub struct HttpEmbedder {
    model: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_in_flight: usize,
    max_attempts: usize,
}

impl HttpEmbedder {
    pub fn new(model: impl Into<String>, base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            model: model.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
            max_in_flight: 4,
            max_attempts: 3,
        }
    }

    /// Base URL from `LLM4NG_EMBED_BASE_URL`, then `LLM4NG_BASE_URL`; key
    /// from `LLM4NG_API_KEY`.
    pub fn from_env(model: impl Into<String>, endpoint: Option<&str>) -> Self {
        let base = endpoint
            .map(str::to_string)
            .or_else(|| std::env::var(ENV_EMBED_BASE_URL).ok())
            .or_else(|| std::env::var(crate::generate::ENV_BASE_URL).ok())
            .unwrap_or_else(|| crate::generate::DEFAULT_BASE_URL.to_string());
        Self::new(model, base, std::env::var(crate::generate::ENV_API_KEY).ok())
    }

    fn request_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::to_string(&EmbeddingRequest { model: &self.model, input: texts })?;
        let url = format!("{}/embeddings", self.base_url);
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let outcome = req.send(&body).map_err(|e| e.to_string()).and_then(|mut r| {
                let status = r.status().as_u16();
                r.body_mut().read_to_string().map(|t| (status, t)).map_err(|e| e.to_string())
            });
            match outcome {
                Ok((200, text)) => {
                    let mut parsed: EmbeddingResponse = serde_json::from_str(&text)
                        .map_err(|e| Error::BackendUnavailable(format!("bad embeddings response: {e}")))?;
                    if parsed.data.len() != texts.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "sent {} inputs, received {} embeddings",
                            texts.len(),
                            parsed.data.len()
                        )));
                    }
                    parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
                    return Ok(parsed.data.into_iter().map(|d| d.embedding).collect());
                }
                Ok((status, text)) => {
                    last = format!("HTTP {status}: {text}");
                    if status != 429 && status < 500 {
                        break;
                    }
                }
                Err(e) => last = e,
            }
            std::thread::sleep(Duration::from_millis(500) * 2u32.pow(attempt as u32));
        }
        Err(Error::BackendUnavailable(last))
    }

    /// Embeds every text, preserving input order. All vectors must share
    /// one dimension.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let batches: Vec<&[String]> = texts.chunks(BATCH).collect();
        let mut out = Vec::with_capacity(texts.len());
        for group in batches.chunks(self.max_in_flight.max(1)) {
            let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
                let handles: Vec<_> = group.iter().map(|b| s.spawn(move || self.request_batch(b))).collect();
                handles.into_iter().map(|h| h.join().expect("embedding thread panicked")).collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        if let Some(first) = out.first().map(Vec::len) {
            if let Some(bad) = out.iter().position(|v| v.len() != first) {
                return Err(Error::DimensionMismatch(format!(
                    "embedding {bad} has dimension {}, expected {first}",
                    out[bad].len()
                )));
            }
        }
        Ok(out)
    }
}
