//! Dense text representations and cosine similarity.
//!
//! The mock backend is a hashed bag of words: every analyzed token lands in
//! bucket `fnv1a64(token) % dim`, bucket counts form the raw vector, and the
//! result is L2-normalized. Remote vectors are used exactly as returned.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{BackendKind, JsonlCache, VectorPayload};
use crate::corpus::{analyze, AnalyzerConfig};
use crate::error::{invalid, Error, Result};
use crate::hash::{digest_fields, fnv1a64};
use crate::http::{InFlightLimit, JsonClient};

pub const MOCK_DIM: usize = 256;
pub const REMOTE_DIM: usize = 1536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("embedding must have at least one dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("embedding contains non-finite values"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `<a, b> / (|a| |b|)`.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Bucket a token falls into under the mock embedding.
pub fn mock_bucket(token: &str, dim: usize) -> usize {
    (fnv1a64(token.as_bytes()) % dim as u64) as usize
}

pub fn mock_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim < 2 {
        return Err(invalid("mock embedding dimension must be at least 2"));
    }
    let tokens = analyze(text, &AnalyzerConfig::default());
    if tokens.is_empty() {
        return Err(invalid("text analyzes to zero tokens"));
    }
    let mut v = vec![0.0; dim];
    for t in tokens.iter() {
        v[mock_bucket(t, dim)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(EmbeddingVector(v))
}

pub trait EmbeddingBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn model(&self) -> &str;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dim: MOCK_DIM }
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn model(&self) -> &str {
        "mock-hashed-bow"
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        mock_embed(text, self.dim)
    }
}

/// Embeddings endpoint: request `{model, input}`, response
/// `{data: [{embedding}]}`.
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
}

impl RemoteEmbedder {
    pub fn new(client: JsonClient, model: impl Into<String>) -> Self {
        Self {
            client,
            model: model.into(),
        }
    }

    pub fn client(&self) -> &JsonClient {
        &self.client
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let resp = self.client.post(&json!({ "model": self.model, "input": text }))?;
        let values = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedResponse("expected data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::MalformedResponse("non-numeric embedding value".into())))
            .collect::<Result<Vec<f64>>>()?;
        EmbeddingVector::new(values).map_err(|e| Error::MalformedResponse(e.to_string()))
    }
}

/// Cached, concurrency-limited front for an [`EmbeddingBackend`].
pub struct Embedder {
    backend: Box<dyn EmbeddingBackend>,
    cache: JsonlCache<VectorPayload>,
    limit: InFlightLimit,
    dim: OnceLock<usize>,
}

impl Embedder {
    pub fn new(backend: Box<dyn EmbeddingBackend>, cache: JsonlCache<VectorPayload>, max_in_flight: usize) -> Self {
        Self {
            backend,
            cache,
            limit: InFlightLimit::new(max_in_flight),
            dim: OnceLock::new(),
        }
    }

    pub fn mock(dim: usize) -> Self {
        Self::new(Box::new(MockEmbedder { dim }), JsonlCache::in_memory(), 4)
    }

    pub fn cache(&self) -> &JsonlCache<VectorPayload> {
        &self.cache
    }

    pub fn cache_key(&self, text: &str) -> String {
        digest_fields(&[self.backend.kind().as_str(), self.backend.model(), text])
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_traced(text).map(|(v, _)| v)
    }

    /// Like [`Embedder::embed`], also reporting whether the cache answered.
    pub fn embed_traced(&self, text: &str) -> Result<(EmbeddingVector, bool)> {
        if text.trim().is_empty() {
            return Err(invalid("cannot embed empty text"));
        }
        let key = self.cache_key(text);
        if let Some(hit) = self.cache.get(&key) {
            let v = EmbeddingVector(hit.embedding);
            self.check_dim(&v)?;
            return Ok((v, true));
        }
        let v = {
            let _permit = self.limit.acquire();
            self.backend.embed_text(text)?
        };
        self.check_dim(&v)?;
        let request = json!({ "model": self.backend.model(), "input": text });
        self.cache
            .insert(&key, request, VectorPayload { embedding: v.0.clone() }, self.backend.kind())?;
        Ok((v, false))
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<()> {
        let expected = *self.dim.get_or_init(|| v.dim());
        if expected != v.dim() {
            return Err(Error::MalformedResponse(format!(
                "embedding dimension changed within a session: {expected} then {}",
                v.dim()
            )));
        }
        Ok(())
    }
}
