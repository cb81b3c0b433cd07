//! Chat backends: a deterministic offline mock and an HTTP client for
//! chat-completions style endpoints.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TemplateId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    /// Seed for the mock backend; part of the cache key for every backend.
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 1.0, seed: 0 }
    }
}

/// The wire request: exactly what an HTTP backend sends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Serialized request body, byte-for-byte what goes on the wire.
    pub fn body(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// What the generator expects back from one request. Real backends ignore
/// it; the mock uses it to decide what to emit.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestMeta {
    pub template_id: TemplateId,
    /// Classes the completion should cover, in output order.
    pub class_ids: Vec<usize>,
    /// Samples per class expected in the completion.
    pub samples_per_class: usize,
    pub replicate: usize,
    pub seed: u64,
}

pub trait ChatBackend: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, request: &ChatRequest, meta: &RequestMeta) -> Result<String>;
}

/// Share of mock tokens drawn from another class's vocabulary.
pub const MOCK_NOISE: f64 = 0.05;
const MOCK_TITLE_TOKENS: usize = 6;
const MOCK_ABSTRACT_SENTENCES: usize = 5;
const MOCK_SENTENCE_TOKENS: usize = 8;

fn draw<'a>(rng: &mut ChaCha8Rng, class_id: usize, vocabs: &'a [Vec<String>]) -> &'a str {
    let mut source = class_id;
    if vocabs.len() > 1 && rng.random_bool(MOCK_NOISE) {
        source = (class_id + rng.random_range(1..vocabs.len())) % vocabs.len();
    }
    let v = &vocabs[source];
    &v[rng.random_range(0..v.len())]
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Deterministic pseudo-completion for one class and replicate.
///
/// Tokens come from `vocabs[class_id]`, with a small share from other
/// classes. Output is a pure function of the arguments.
pub fn mock_generate(class_id: usize, replicate: usize, seed: u64, vocabs: &[Vec<String>]) -> String {
    assert!(class_id < vocabs.len() && !vocabs[class_id].is_empty(), "class vocabulary must be non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class_id as u64) << 32) | replicate as u64);
    let title: Vec<String> = (0..MOCK_TITLE_TOKENS).map(|_| capitalize(draw(&mut rng, class_id, vocabs))).collect();
    let sentences: Vec<String> = (0..MOCK_ABSTRACT_SENTENCES)
        .map(|_| {
            let words: Vec<&str> = (0..MOCK_SENTENCE_TOKENS).map(|_| draw(&mut rng, class_id, vocabs)).collect();
            format!("{}.", capitalize(&words.join(" ")))
        })
        .collect();
    format!("Title: {}.\nAbstract: {}", title.join(" "), sentences.join(" "))
}

/// Offline backend that answers with [`mock_generate`] output.
#[derive(Debug, Clone)]
pub struct MockBackend {
    vocabs: Vec<Vec<String>>,
}

impl MockBackend {
    pub fn new(vocabs: Vec<Vec<String>>) -> Result<Self> {
        if vocabs.is_empty() || vocabs.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("mock backend needs a non-empty vocabulary per class".into()));
        }
        Ok(Self { vocabs })
    }

    /// Vocabularies taken from the words of each label text.
    pub fn from_label_texts(labels: &[String]) -> Result<Self> {
        Self::new(labels.iter().map(|l| crate::embed::tokenize(l)).collect())
    }
}

impl ChatBackend for MockBackend {
    fn model(&self) -> &str {
        "mock"
    }

    fn complete(&self, _request: &ChatRequest, meta: &RequestMeta) -> Result<String> {
        if let Some(&c) = meta.class_ids.iter().find(|&&c| c >= self.vocabs.len()) {
            return Err(Error::IndexOutOfRange(format!("class {c} has no mock vocabulary")));
        }
        let mut blocks = Vec::new();
        for &c in &meta.class_ids {
            for i in 0..meta.samples_per_class {
                let replicate = meta.replicate * meta.samples_per_class + i;
                blocks.push(mock_generate(c, replicate, meta.seed, &self.vocabs));
            }
        }
        Ok(blocks.join("\n\n"))
    }
}

pub const ENV_BASE_URL: &str = "LLM4NG_BASE_URL";
pub const ENV_API_KEY: &str = "LLM4NG_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Client for `POST {base}/chat/completions`.
pub struct HttpBackend {
    model: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_attempts: usize,
    backoff: Duration,
}

impl HttpBackend {
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
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the base URL and API key from the environment.
    pub fn from_env(model: impl Into<String>) -> Self {
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Self::new(model, base, std::env::var(ENV_API_KEY).ok())
    }

    pub fn with_retries(mut self, max_attempts: usize, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &str) -> std::result::Result<String, (bool, String)> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| (false, format!("bad response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| (false, "response has no choices".to_string()))
    }
}

impl ChatBackend for HttpBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest, _meta: &RequestMeta) -> Result<String> {
        let body = request.body();
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    log::warn!("chat request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retryable {
                        break;
                    }
                    if attempt + 1 < self.max_attempts {
                        std::thread::sleep(self.backoff * 2u32.pow(attempt as u32));
                    }
                }
            }
        }
        Err(Error::BackendUnavailable(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocabs() -> Vec<Vec<String>> {
        vec![
            ["graph", "node", "edge", "walk"].map(String::from).to_vec(),
            ["protein", "cell", "gene", "enzyme"].map(String::from).to_vec(),
            ["market", "price", "trade", "stock"].map(String::from).to_vec(),
        ]
    }

    #[test]
    fn mock_is_deterministic_and_replicates_differ() {
        let v = vocabs();
        assert_eq!(mock_generate(1, 0, 7, &v), mock_generate(1, 0, 7, &v));
        assert_ne!(mock_generate(1, 0, 7, &v), mock_generate(1, 1, 7, &v));
        assert_ne!(mock_generate(1, 0, 7, &v), mock_generate(1, 0, 8, &v));
    }

    #[test]
    fn mock_output_parses() {
        let text = mock_generate(0, 3, 1, &vocabs());
        let (title, abstract_text) = super::super::parse_completion(&text).unwrap();
        assert_eq!(title.split_whitespace().count(), MOCK_TITLE_TOKENS);
        assert!(abstract_text.split_whitespace().count() >= MOCK_SENTENCE_TOKENS * MOCK_ABSTRACT_SENTENCES);
    }

    #[test]
    fn mock_backend_emits_one_block_per_class_and_sample() {
        let b = MockBackend::new(vocabs()).unwrap();
        let req = ChatRequest { model: "mock".into(), messages: vec![], temperature: 1.0 };
        let meta = RequestMeta {
            template_id: TemplateId::P4,
            class_ids: vec![0, 1, 2],
            samples_per_class: 2,
            replicate: 1,
            seed: 3,
        };
        let text = b.complete(&req, &meta).unwrap();
        let blocks = super::super::parse_all_completions(&text);
        assert_eq!(blocks.len(), 6);
        assert!(text.starts_with(&mock_generate(0, 2, 3, &vocabs())));
    }

    #[test]
    fn request_body_field_order_is_stable() {
        let req = ChatRequest {
            model: "gpt-3.5-turbo".into(),
            messages: vec![ChatMessage::user("hi")],
            temperature: 1.0,
        };
        assert_eq!(
            req.body(),
            r#"{"model":"gpt-3.5-turbo","messages":[{"role":"user","content":"hi"}],"temperature":1.0}"#
        );
    }
}
