//! Text-generation gateway: a remote OpenAI-compatible completions client,
//! a deterministic offline mock, and a write-through JSONL cache in front of
//! either.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{BackendKind, JsonlCache, TextPayload};
use crate::corpus::stopwords;
use crate::error::{invalid, Error, Result};
use crate::hash::{digest_bytes, digest_fields};
use crate::http::{InFlightLimit, JsonClient};

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_MOCK_ITEMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Distinguishes the n-th of N samples drawn from the same prompt.
    pub seed_tag: String,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model: model.into(),
            temperature: 0.7,
            top_p: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed_tag: "s0".to_string(),
        }
    }

    pub fn with_seed_tag(mut self, tag: impl Into<String>) -> Self {
        self.seed_tag = tag.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(invalid(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(invalid(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens must be positive"));
        }
        Ok(())
    }

    pub fn cache_key(&self, backend: BackendKind) -> String {
        digest_fields(&[
            backend.as_str(),
            &self.model,
            &self.prompt,
            &self.temperature.to_string(),
            &self.top_p.to_string(),
            &self.max_tokens.to_string(),
            &self.seed_tag,
        ])
    }

    /// Body of an OpenAI-compatible `/completions` call.
    pub fn wire_body(&self) -> Value {
        json!({
            "model": self.model,
            "prompt": self.prompt,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub cached: bool,
    pub backend: BackendKind,
}

pub trait TextGenerator: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, req: &GenerationRequest) -> Result<String>;
}

/// Content words of a prompt: lowercased alphanumeric runs that contain a
/// letter and are not stopwords, deduplicated in first-seen order.
fn prompt_words(prompt: &str) -> Vec<String> {
    let stop = stopwords();
    let mut seen = std::collections::HashSet::new();
    prompt
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.chars().any(char::is_alphabetic) && !stop.contains(w.as_str()))
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

/// Deterministic stand-in for an LLM completion, shaped like a
/// query-query-document answer: `items` numbered entries, each a question
/// line followed by a passage line.
///
/// Every word is drawn with probability 1/2 from `vocab` and otherwise from
/// the prompt's content words. The RNG is seeded from `(seed, prompt,
/// seed_tag)`.
pub fn mock_generate_with(req: &GenerationRequest, vocab: &[String], items: usize, seed: u64) -> Result<String> {
    let vocab: Vec<&str> = vocab
        .iter()
        .map(|w| w.trim())
        .filter(|w| w.chars().any(char::is_alphabetic))
        .collect();
    if vocab.is_empty() {
        return Err(invalid("mock vocabulary must contain at least one word"));
    }
    let from_prompt = prompt_words(&req.prompt);
    let mut rng = ChaCha8Rng::from_seed(digest_bytes(&[
        &seed.to_string(),
        req.prompt.as_str(),
        req.seed_tag.as_str(),
    ]));

    let draw = |rng: &mut ChaCha8Rng| -> String {
        if from_prompt.is_empty() || rng.random_bool(0.5) {
            vocab.choose(rng).unwrap().to_string()
        } else {
            from_prompt.choose(rng).unwrap().clone()
        }
    };

    let mut out = String::new();
    for i in 1..=items.max(1) {
        let q_len = rng.random_range(3..=6);
        let p_len = rng.random_range(10..=20);
        let question: Vec<String> = (0..q_len).map(|_| draw(&mut rng)).collect();
        let passage: Vec<String> = (0..p_len).map(|_| draw(&mut rng)).collect();
        if i > 1 {
            out.push('\n');
        }
        out.push_str(&format!("{i}. {}?\n{}.", capitalize(&question.join(" ")), capitalize(&passage.join(" "))));
    }
    Ok(out)
}

pub fn mock_generate(req: &GenerationRequest, vocab: &[String]) -> Result<String> {
    mock_generate_with(req, vocab, DEFAULT_MOCK_ITEMS, 0)
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Vocabulary used by the mock when none is configured.
pub fn default_mock_vocab() -> Vec<String> {
    [
        "information", "retrieval", "search", "document", "answer", "context", "relevant", "topic",
        "example", "result", "evidence", "source", "overview", "detail", "background",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub vocab: Vec<String>,
    pub items: usize,
    pub seed: u64,
}

impl MockGenerator {
    pub fn new(vocab: Vec<String>, seed: u64) -> Self {
        Self {
            vocab,
            items: DEFAULT_MOCK_ITEMS,
            seed,
        }
    }
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self::new(default_mock_vocab(), 0)
    }
}

impl TextGenerator for MockGenerator {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String> {
        mock_generate_with(req, &self.vocab, self.items, self.seed)
    }
}

/// OpenAI-compatible completions endpoint: request
/// `{model, prompt, temperature, top_p, max_tokens}`, response
/// `{choices: [{text}]}`.
pub struct RemoteGenerator {
    client: JsonClient,
}

impl RemoteGenerator {
    pub fn new(client: JsonClient) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &JsonClient {
        &self.client
    }
}

impl TextGenerator for RemoteGenerator {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn complete(&self, req: &GenerationRequest) -> Result<String> {
        let resp = self.client.post(&req.wire_body())?;
        resp.pointer("/choices/0/text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::MalformedResponse("expected choices[0].text".into()))
    }
}

/// Backend plus cache plus in-flight limit.
pub struct Gateway {
    backend: Box<dyn TextGenerator>,
    cache: JsonlCache<TextPayload>,
    limit: InFlightLimit,
}

impl Gateway {
    pub fn new(backend: Box<dyn TextGenerator>, cache: JsonlCache<TextPayload>, max_in_flight: usize) -> Self {
        Self {
            backend,
            cache,
            limit: InFlightLimit::new(max_in_flight),
        }
    }

    pub fn mock(vocab: Vec<String>, seed: u64) -> Self {
        Self::new(Box::new(MockGenerator::new(vocab, seed)), JsonlCache::in_memory(), 4)
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn cache(&self) -> &JsonlCache<TextPayload> {
        &self.cache
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        req.validate()?;
        let backend = self.backend.kind();
        let key = req.cache_key(backend);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(GenerationResponse {
                text: hit.text,
                cached: true,
                backend,
            });
        }
        let text = {
            let _permit = self.limit.acquire();
            self.backend.complete(req)?
        };
        if text.trim().is_empty() {
            return Err(Error::EmptyGeneration);
        }
        let request = serde_json::to_value(req).unwrap_or(Value::Null);
        self.cache
            .insert(&key, request, TextPayload { text: text.clone() }, backend)?;
        Ok(GenerationResponse {
            text,
            cached: false,
            backend,
        })
    }
}
