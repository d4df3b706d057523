use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{ProviderError, RetryPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_tag: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider: {0}")]
    Provider(ProviderError),
    #[error("embedding has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("zero-norm vector has no direction")]
    ZeroNorm,
    #[error("provider returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("embedding cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_tag(&self) -> &str;

    /// Declared output dimension, when known up front.
    fn dimension(&self) -> Option<usize> {
        None
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Cosine similarity. Fails on unequal dimensions or a zero vector.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_values(&a.values, &b.values)
}

pub(crate) fn cosine_values(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it", "its", "of", "on",
    "or", "the", "then", "this", "that", "to", "with", "which",
];

/// Deterministic feature-hashing embedder for offline use. Lower-cased
/// word tokens (minus a few stopwords) are hashed into signed buckets, and
/// a constant bias feature keeps every vector non-zero.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    tag: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HashEmbedder {
            dim,
            tag: format!("hash-{dim}"),
        }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let h = Sha256::digest(token.as_bytes());
        let idx = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % self.dim as u64;
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        (idx as usize, sign)
    }

    /// Tokens are lowercased, stopwords dropped and each word cut to its
    /// first six characters, a crude stem. Term counts are log-damped.
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let lower = text.to_lowercase();
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            if STOPWORDS.contains(&word) {
                continue;
            }
            let stem: String = word.chars().take(6).collect();
            *counts.entry(stem).or_insert(0) += 1;
        }
        let mut v = vec![0.0; self.dim];
        let (i, s) = self.bucket("\u{0}bias");
        v[i] += s * 0.5;
        for (stem, n) in counts {
            let (i, s) = self.bucket(&stem);
            v[i] += s * (1.0 + f64::from(n).ln());
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(512)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn model_tag(&self) -> &str {
        &self.tag
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// `POST <base>/embeddings` with `{model, input}` and a bearer token.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    model: String,
    dim: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
        dim: Option<usize>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            dim,
        })
    }
}

fn parse_vectors(value: &Value) -> Option<Vec<Vec<f64>>> {
    let rows: Vec<&Value> = match (value.get("data"), value.get("embeddings")) {
        (Some(Value::Array(data)), _) => data.iter().map(|d| d.get("embedding")).collect::<Option<_>>()?,
        (_, Some(Value::Array(rows))) => rows.iter().collect(),
        _ => return None,
    };
    rows.into_iter()
        .map(|r| r.as_array()?.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
        .collect()
}

impl EmbeddingProvider for HttpEmbedder {
    fn model_tag(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> Option<usize> {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let response = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&json!({"model": self.model, "input": texts}))
            .send()
            .map_err(|e| ProviderError::Transient(e.without_url().to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(ProviderError::Transient(format!("HTTP {status}"))),
            _ => return Err(ProviderError::Fatal(format!("HTTP {status}"))),
        }
        let value: Value = response
            .json()
            .map_err(|e| ProviderError::Fatal(e.without_url().to_string()))?;
        parse_vectors(&value).ok_or_else(|| ProviderError::Fatal("unrecognised embedding response".into()))
    }
}

const MAGIC: &[u8; 6] = b"FSEMB1";

/// On-disk cache: one file per `sha256(model_tag, text)` holding a small
/// header and the vector as little-endian f64s.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EmbedError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| EmbedError::Cache {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(EmbeddingCache { dir })
    }

    pub fn key(model_tag: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(model_tag.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.emb"))
    }

    pub fn get(&self, model_tag: &str, text: &str) -> Result<Option<EmbeddingVector>, EmbedError> {
        let path = self.path(&Self::key(model_tag, text));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(EmbedError::Cache {
                    path,
                    message: e.to_string(),
                })
            }
        };
        decode(&bytes, model_tag)
            .map(Some)
            .ok_or(EmbedError::Cache {
                path,
                message: "corrupt cache entry".into(),
            })
    }

    pub fn put(&self, text: &str, vector: &EmbeddingVector) -> Result<(), EmbedError> {
        let key = Self::key(&vector.model_tag, text);
        let path = self.path(&key);
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        let io = |e: std::io::Error| EmbedError::Cache {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(&encode(vector)).map_err(io)?;
        file.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }
}

fn encode(v: &EmbeddingVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + v.model_tag.len() + 8 * v.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(v.values.len() as u32).to_le_bytes());
    out.extend_from_slice(&(v.model_tag.len() as u32).to_le_bytes());
    out.extend_from_slice(v.model_tag.as_bytes());
    for x in &v.values {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8], model_tag: &str) -> Option<EmbeddingVector> {
    let rest = bytes.strip_prefix(MAGIC)?;
    let dim = u32::from_le_bytes(rest.get(..4)?.try_into().ok()?) as usize;
    let tag_len = u32::from_le_bytes(rest.get(4..8)?.try_into().ok()?) as usize;
    let tag = std::str::from_utf8(rest.get(8..8 + tag_len)?).ok()?;
    if tag != model_tag {
        return None;
    }
    let body = rest.get(8 + tag_len..)?;
    if body.len() != dim * 8 {
        return None;
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Some(EmbeddingVector {
        values,
        model_tag: tag.to_string(),
    })
}

/// Provider with an in-memory memo, an optional disk cache, retries and a
/// fixed dimension per model tag.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
    dim: Mutex<Option<usize>>,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let dim = provider.dimension();
        Embedder {
            provider,
            cache: None,
            memo: Mutex::new(HashMap::new()),
            dim: Mutex::new(dim),
            retry: RetryPolicy::default(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Offline default: [`HashEmbedder`] without a disk cache.
    pub fn hashing() -> Self {
        Self::new(Arc::new(HashEmbedder::default()))
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn model_tag(&self) -> &str {
        self.provider.model_tag()
    }

    /// Number of batches sent to the provider so far.
    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn check(&self, values: &[f64]) -> Result<(), EmbedError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let mut dim = self.dim.lock().expect("dim lock");
        match *dim {
            Some(expected) if expected != values.len() => Err(EmbedError::DimensionMismatch {
                expected,
                found: values.len(),
            }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(values.len());
                Ok(())
            }
        }
    }

    fn call_provider(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let attempts = self.retry.attempts.max(1);
        let mut delay = self.retry.base_delay;
        for attempt in 1..=attempts {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.embed_batch(texts) {
                Ok(v) => return Ok(v),
                Err(ProviderError::Transient(_)) if attempt < attempts => {
                    std::thread::sleep(delay);
                    delay = (delay * 2).min(self.retry.max_delay);
                }
                Err(e) => return Err(EmbedError::Provider(e)),
            }
        }
        unreachable!("loop returns on the last attempt")
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_many(&[text.to_string()])?.remove(0))
    }

    /// Embed several texts, sending only uncached ones to the provider in
    /// one batch.
    pub fn embed_many(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let tag = self.provider.model_tag().to_string();
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut missing: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            if let Some(v) = self.memo.lock().expect("memo lock").get(text) {
                out[i] = Some(v.clone());
                continue;
            }
            if let Some(cache) = &self.cache {
                if let Some(v) = cache.get(&tag, text)? {
                    self.check(&v.values)?;
                    self.memo.lock().expect("memo lock").insert(text.clone(), v.clone());
                    out[i] = Some(v);
                    continue;
                }
            }
            missing.push(i);
        }
        // the same text may be requested twice in one batch
        let mut unique: Vec<String> = Vec::new();
        for &i in &missing {
            if !unique.contains(&texts[i]) {
                unique.push(texts[i].clone());
            }
        }
        if !unique.is_empty() {
            let vectors = self.call_provider(&unique)?;
            if vectors.len() != unique.len() {
                return Err(EmbedError::CountMismatch {
                    expected: unique.len(),
                    found: vectors.len(),
                });
            }
            for (text, values) in unique.iter().zip(vectors) {
                self.check(&values)?;
                let v = EmbeddingVector {
                    values,
                    model_tag: tag.clone(),
                };
                if let Some(cache) = &self.cache {
                    cache.put(text, &v)?;
                }
                self.memo.lock().expect("memo lock").insert(text.clone(), v);
            }
            let memo = self.memo.lock().expect("memo lock");
            for i in missing {
                out[i] = Some(memo[&texts[i]].clone());
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}
