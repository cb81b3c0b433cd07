//! Labeled sample generation through prompted chat completions.
//!
//! Every request goes through a [`GenerationCache`]; a warm cache replays a
//! run without touching the backend.

mod backend;
mod cache;
mod parse;
mod template;

pub use backend::{
    mock_generate, ChatBackend, ChatMessage, ChatRequest, HttpBackend, MockBackend, RequestMeta, SamplingParams,
    DEFAULT_BASE_URL, ENV_API_KEY, ENV_BASE_URL, MOCK_NOISE,
};
pub use cache::{cache_key, CacheRecord, CacheStats, GenerationCache};
pub use parse::{parse_all_completions, parse_completion};
pub use template::{render_prompt, PromptContext, TemplateId, FORMAT_REMINDER};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_id: TemplateId,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub replicate: usize,
    pub cache_key: String,
}

/// One generated, labeled paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub class_id: usize,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub provenance: Provenance,
}

impl GeneratedSample {
    /// Text used for the node: title and abstract on separate lines.
    pub fn node_text(&self) -> String {
        format!("{}\n{}", self.title, self.abstract_text)
    }
}

/// Parameters for generating the samples of one class.
#[derive(Debug, Clone)]
pub struct GenerationJob<'a> {
    pub class_id: usize,
    pub m: usize,
    pub template: TemplateId,
    pub labels: &'a LabelSet,
    pub params: SamplingParams,
    /// P3 only: exemplar "title and abstract" texts for this class.
    pub exemplars: Vec<String>,
    /// Skip completions whose title repeats an earlier one.
    pub dedup: bool,
    /// Upper bound on concurrent backend requests.
    pub max_in_flight: usize,
}

impl<'a> GenerationJob<'a> {
    pub fn new(class_id: usize, m: usize, template: TemplateId, labels: &'a LabelSet) -> Self {
        Self {
            class_id,
            m,
            template,
            labels,
            params: SamplingParams::default(),
            exemplars: Vec::new(),
            dedup: false,
            max_in_flight: 4,
        }
    }
}

struct Call {
    class_id: Option<usize>,
    messages: Vec<ChatMessage>,
    meta: RequestMeta,
    key: String,
}

struct Fetched {
    completion: String,
    key: String,
}

struct Generator<'b> {
    backend: &'b dyn ChatBackend,
    cache: &'b mut GenerationCache,
    params: SamplingParams,
    template: TemplateId,
}

impl<'b> Generator<'b> {
    fn call(&self, class_id: Option<usize>, messages: Vec<ChatMessage>, meta: RequestMeta) -> Call {
        let key = cache_key(self.template, &messages, self.backend.model(), &self.params, meta.replicate);
        Call { class_id, messages, meta, key }
    }

    fn request(&self, call: &Call) -> ChatRequest {
        ChatRequest {
            model: self.backend.model().to_string(),
            messages: call.messages.clone(),
            temperature: self.params.temperature,
        }
    }

    fn record(&mut self, call: &Call, completion: String) -> Result<()> {
        let first = parse_all_completions(&completion).into_iter().next();
        let record = CacheRecord {
            key: call.key.clone(),
            template_id: self.template,
            class_id: call.class_id,
            prompt: call.messages.last().map(|m| m.content.clone()).unwrap_or_default(),
            model: self.backend.model().to_string(),
            params: self.params.clone(),
            replicate: call.meta.replicate,
            title: first.as_ref().map(|(t, _)| t.clone()),
            abstract_text: first.map(|(_, a)| a),
            completion,
            request: self.request(call).body(),
        };
        self.cache.insert(record)?;
        Ok(())
    }

    /// Fills the cache for every call not yet present, with at most
    /// `max_in_flight` concurrent backend requests. Records are appended in
    /// call order.
    fn prefetch(&mut self, calls: &[Call], max_in_flight: usize) -> Result<()> {
        let missing: Vec<&Call> = calls.iter().filter(|c| self.cache.get(&c.key).is_none()).collect();
        for chunk in missing.chunks(max_in_flight.max(1)) {
            let results: Vec<Result<String>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|call| {
                        let req = self.request(call);
                        let backend = self.backend;
                        s.spawn(move || backend.complete(&req, &call.meta))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("backend thread panicked")).collect()
            });
            for (call, res) in chunk.iter().zip(results) {
                self.record(call, res?)?;
            }
        }
        Ok(())
    }

    fn fetch(&mut self, call: &Call) -> Result<Fetched> {
        if let Some(rec) = self.cache.get(&call.key) {
            return Ok(Fetched { completion: rec.completion.clone(), key: call.key.clone() });
        }
        let completion = self.backend.complete(&self.request(call), &call.meta)?;
        self.record(call, completion.clone())?;
        Ok(Fetched { completion, key: call.key.clone() })
    }

    fn fetch_quiet(&mut self, call: &Call) -> Result<Fetched> {
        if let Some(rec) = self.cache.peek(&call.key) {
            return Ok(Fetched { completion: rec.completion.clone(), key: call.key.clone() });
        }
        self.fetch(call)
    }

    /// Returns at least `need` parsed blocks, re-asking once with a format
    /// reminder if the first completion falls short.
    fn blocks(&mut self, call: Call, need: usize, prefetched: bool) -> Result<(Vec<(String, String)>, String)> {
        let first = if prefetched { self.fetch_quiet(&call)? } else { self.fetch(&call)? };
        let blocks = parse_all_completions(&first.completion);
        if blocks.len() >= need {
            return Ok((blocks, first.key));
        }
        log::warn!("completion {} had {} of {need} samples; re-asking with format reminder", first.key, blocks.len());
        let mut messages = call.messages.clone();
        if let Some(last) = messages.last_mut() {
            last.content = format!("{}\n{FORMAT_REMINDER}", last.content);
        }
        let retry = self.call(call.class_id, messages, call.meta.clone());
        let second = self.fetch(&retry)?;
        let blocks = parse_all_completions(&second.completion);
        if blocks.len() >= need {
            return Ok((blocks, second.key));
        }
        match parse_completion(&second.completion) {
            Err(e) => Err(e),
            Ok(_) => Err(Error::MalformedCompletion(format!("expected {need} samples, parsed {}", blocks.len()))),
        }
    }
}

fn meta(job: &GenerationJob, class_ids: Vec<usize>, samples_per_class: usize, replicate: usize) -> RequestMeta {
    RequestMeta { template_id: job.template, class_ids, samples_per_class, replicate, seed: job.params.seed }
}

/// Generates exactly `job.m` samples for `job.class_id`.
///
/// One request per sample for P1, P2, P3 and P6; P4 requests cover every
/// class (and are shared through the cache across classes); P5 asks for all
/// `m` samples in one request.
pub fn generate_samples(
    job: &GenerationJob,
    backend: &dyn ChatBackend,
    cache: &mut GenerationCache,
) -> Result<Vec<GeneratedSample>> {
    if job.class_id >= job.labels.len() {
        return Err(Error::IndexOutOfRange(format!("class {} with {} labels", job.class_id, job.labels.len())));
    }
    if job.m == 0 {
        return Ok(Vec::new());
    }
    let class_text = job.labels.text(job.class_id).to_string();
    let mut gen = Generator { backend, cache, params: job.params.clone(), template: job.template };
    let sample = |title: String, abstract_text: String, replicate: usize, key: String| GeneratedSample {
        class_id: job.class_id,
        title,
        abstract_text,
        provenance: Provenance {
            template_id: job.template,
            model: backend.model().to_string(),
            temperature: job.params.temperature,
            seed: job.params.seed,
            replicate,
            cache_key: key,
        },
    };
    let mut out = Vec::with_capacity(job.m);
    let mut seen_titles = HashSet::new();
    let mut accept = |s: GeneratedSample, out: &mut Vec<GeneratedSample>| {
        if !job.dedup || seen_titles.insert(s.title.to_lowercase()) {
            out.push(s);
        }
    };
    let max_replicates = if job.dedup { job.m * 3 } else { job.m };

    match job.template {
        TemplateId::P1 | TemplateId::P2 | TemplateId::P3 => {
            let ctx = PromptContext { exemplars: job.exemplars.clone(), ..Default::default() };
            let prompt = render_prompt(job.template, &class_text, &ctx)?;
            let make = |gen: &Generator, r: usize| {
                gen.call(Some(job.class_id), vec![ChatMessage::user(prompt.clone())], meta(job, vec![job.class_id], 1, r))
            };
            let first: Vec<Call> = (0..job.m).map(|r| make(&gen, r)).collect();
            gen.prefetch(&first, job.max_in_flight)?;
            for (r, call) in first.into_iter().enumerate() {
                let (mut blocks, key) = gen.blocks(call, 1, true)?;
                let (t, a) = blocks.swap_remove(0);
                accept(sample(t, a, r, key), &mut out);
            }
            let mut r = job.m;
            while out.len() < job.m && r < max_replicates {
                let (mut blocks, key) = gen.blocks(make(&gen, r), 1, false)?;
                let (t, a) = blocks.swap_remove(0);
                accept(sample(t, a, r, key), &mut out);
                r += 1;
            }
        }
        TemplateId::P4 => {
            let ctx = PromptContext { label_texts: job.labels.texts().to_vec(), ..Default::default() };
            let prompt = render_prompt(job.template, &class_text, &ctx)?;
            let all: Vec<usize> = (0..job.labels.len()).collect();
            let mut r = 0;
            while out.len() < job.m && r < max_replicates {
                let call = gen.call(None, vec![ChatMessage::user(prompt.clone())], meta(job, all.clone(), 1, r));
                let (mut blocks, key) = gen.blocks(call, job.labels.len(), false)?;
                let (t, a) = blocks.swap_remove(job.class_id);
                accept(sample(t, a, r, key), &mut out);
                r += 1;
            }
        }
        TemplateId::P5 => {
            let ctx = PromptContext { count: Some(job.m), ..Default::default() };
            let prompt = render_prompt(job.template, &class_text, &ctx)?;
            let call =
                gen.call(Some(job.class_id), vec![ChatMessage::user(prompt)], meta(job, vec![job.class_id], job.m, 0));
            let (blocks, key) = gen.blocks(call, job.m, false)?;
            for (i, (t, a)) in blocks.into_iter().take(job.m).enumerate() {
                accept(sample(t, a, i, key.clone()), &mut out);
            }
        }
        TemplateId::P6 => {
            let mut history: Vec<ChatMessage> = Vec::new();
            let mut titles: Vec<String> = Vec::new();
            let mut r = 0;
            while out.len() < job.m && r < max_replicates {
                let ctx = PromptContext { prior_titles: titles.clone(), ..Default::default() };
                let user = ChatMessage::user(render_prompt(job.template, &class_text, &ctx)?);
                let mut messages = history.clone();
                messages.push(user.clone());
                let call = gen.call(Some(job.class_id), messages, meta(job, vec![job.class_id], 1, r));
                let (mut blocks, key) = gen.blocks(call, 1, false)?;
                let (t, a) = blocks.swap_remove(0);
                history.push(user);
                history.push(ChatMessage::assistant(format!("Title: {t}\nAbstract: {a}")));
                titles.push(t.clone());
                accept(sample(t, a, r, key), &mut out);
                r += 1;
            }
        }
    }
    if out.len() < job.m {
        return Err(Error::MalformedCompletion(format!(
            "obtained {} distinct samples for class {}, {} requested",
            out.len(),
            job.class_id,
            job.m
        )));
    }
    Ok(out)
}

/// Generates `m` samples for every class, class-major.
pub fn generate_for_all_classes(
    labels: &LabelSet,
    m: usize,
    template: TemplateId,
    params: &SamplingParams,
    exemplars: &[Vec<String>],
    dedup: bool,
    backend: &dyn ChatBackend,
    cache: &mut GenerationCache,
) -> Result<Vec<GeneratedSample>> {
    let mut out = Vec::with_capacity(m * labels.len());
    for class_id in 0..labels.len() {
        let job = GenerationJob {
            params: params.clone(),
            exemplars: exemplars.get(class_id).cloned().unwrap_or_default(),
            dedup,
            ..GenerationJob::new(class_id, m, template, labels)
        };
        out.extend(generate_samples(&job, backend, cache)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting<B> {
        inner: B,
        calls: AtomicUsize,
    }

    impl<B: ChatBackend> ChatBackend for Counting<B> {
        fn model(&self) -> &str {
            self.inner.model()
        }
        fn complete(&self, r: &ChatRequest, m: &RequestMeta) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(r, m)
        }
    }

    fn labels() -> LabelSet {
        LabelSet::new(vec!["Graph".into(), "Biology".into(), "Finance".into()]).unwrap()
    }

    fn mock() -> Counting<MockBackend> {
        let vocabs = vec![
            ["graph", "node", "edge", "walk", "spectral"].map(String::from).to_vec(),
            ["protein", "cell", "gene", "enzyme", "tissue"].map(String::from).to_vec(),
            ["market", "price", "trade", "stock", "bond"].map(String::from).to_vec(),
        ];
        Counting { inner: MockBackend::new(vocabs).unwrap(), calls: AtomicUsize::new(0) }
    }

    #[test]
    fn zero_samples_zero_calls() {
        let b = mock();
        let l = labels();
        let out = generate_samples(&GenerationJob::new(0, 0, TemplateId::P1, &l), &b, &mut GenerationCache::in_memory())
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(b.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn second_run_is_served_from_cache() {
        let l = labels();
        let job = GenerationJob {
            params: SamplingParams { temperature: 1.0, seed: 7 },
            ..GenerationJob::new(0, 10, TemplateId::P1, &l)
        };
        let mut cache = GenerationCache::in_memory();
        let b1 = mock();
        let first = generate_samples(&job, &b1, &mut cache).unwrap();
        assert_eq!(first.len(), 10);
        assert_eq!(b1.calls.load(Ordering::SeqCst), 10);
        assert_eq!(cache.stats().misses, 10);

        let b2 = mock();
        let before = cache.stats();
        let second = generate_samples(&job, &b2, &mut cache).unwrap();
        assert_eq!(second, first);
        assert_eq!(b2.calls.load(Ordering::SeqCst), 0);
        assert_eq!(cache.stats().misses, before.misses);
        assert_eq!(cache.len(), 10);
    }

    #[test]
    fn every_template_yields_m_samples_per_class() {
        let l = labels();
        for t in TemplateId::ALL {
            let b = mock();
            let mut cache = GenerationCache::in_memory();
            let exemplars: Vec<Vec<String>> = (0..3).map(|c| vec![format!("[ex {c} a]"), format!("[ex {c} b]")]).collect();
            let all =
                generate_for_all_classes(&l, 4, t, &SamplingParams::default(), &exemplars, false, &b, &mut cache)
                    .unwrap();
            assert_eq!(all.len(), 12, "{t}");
            for c in 0..3 {
                assert_eq!(all.iter().filter(|s| s.class_id == c).count(), 4, "{t}");
            }
            let expected_calls = match t {
                TemplateId::P4 => 4,
                TemplateId::P5 => 3,
                _ => 12,
            };
            assert_eq!(b.calls.load(Ordering::SeqCst), expected_calls, "{t}");
        }
    }

    #[test]
    fn conversation_accumulates_prior_titles() {
        let l = labels();
        let mut cache = GenerationCache::in_memory();
        let out = generate_samples(&GenerationJob::new(1, 3, TemplateId::P6, &l), &mock(), &mut cache).unwrap();
        let last = cache.records().last().unwrap();
        assert!(last.prompt.contains(&format!("{},{}", out[0].title, out[1].title)));
        let body: serde_json::Value = serde_json::from_str(&last.request).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 5);
    }

    struct FlakyFormat {
        calls: AtomicUsize,
        fail_times: usize,
    }

    impl ChatBackend for FlakyFormat {
        fn model(&self) -> &str {
            "flaky"
        }
        fn complete(&self, r: &ChatRequest, _m: &RequestMeta) -> Result<String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_times {
                Ok("Sure, here is a paper about it.".into())
            } else {
                assert!(r.messages.last().unwrap().content.ends_with(FORMAT_REMINDER));
                Ok("Title: Fixed\nAbstract: Now formatted.".into())
            }
        }
    }

    #[test]
    fn one_reprompt_then_error() {
        let l = labels();
        let b = FlakyFormat { calls: AtomicUsize::new(0), fail_times: 1 };
        let out = generate_samples(&GenerationJob::new(0, 1, TemplateId::P1, &l), &b, &mut GenerationCache::in_memory())
            .unwrap();
        assert_eq!(out[0].title, "Fixed");
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);

        let b = FlakyFormat { calls: AtomicUsize::new(0), fail_times: 2 };
        let err = generate_samples(&GenerationJob::new(0, 1, TemplateId::P1, &l), &b, &mut GenerationCache::in_memory())
            .unwrap_err();
        assert!(matches!(err, Error::MalformedCompletion(_)));
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    struct Repeating;

    impl ChatBackend for Repeating {
        fn model(&self) -> &str {
            "repeat"
        }
        fn complete(&self, _r: &ChatRequest, m: &RequestMeta) -> Result<String> {
            Ok(format!("Title: T{}\nAbstract: A.", m.replicate / 2))
        }
    }

    #[test]
    fn dedup_requests_extra_replicates() {
        let l = labels();
        let job = GenerationJob { dedup: true, ..GenerationJob::new(0, 3, TemplateId::P1, &l) };
        let out = generate_samples(&job, &Repeating, &mut GenerationCache::in_memory()).unwrap();
        let titles: Vec<_> = out.iter().map(|s| s.title.as_str()).collect();
        assert_eq!(titles, vec!["T0", "T1", "T2"]);
        let no_dedup = generate_samples(&GenerationJob::new(0, 3, TemplateId::P1, &l), &Repeating, &mut GenerationCache::in_memory()).unwrap();
        assert_eq!(no_dedup.iter().map(|s| s.title.as_str()).collect::<Vec<_>>(), vec!["T0", "T0", "T1"]);
    }

    #[test]
    fn exemplar_template_without_exemplars_fails() {
        let l = labels();
        let err = generate_samples(&GenerationJob::new(0, 2, TemplateId::P3, &l), &mock(), &mut GenerationCache::in_memory())
            .unwrap_err();
        assert!(matches!(err, Error::MissingSlot { .. }));
    }
}
