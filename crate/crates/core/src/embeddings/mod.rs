//! Embedding providers and vector similarity.
//!
//! Every provider is reached through [`EmbeddingProvider`]; the pipeline
//! picks one by name from [`EmbedderRegistry`]. [`embed_texts`] handles
//! batching, bounded concurrency, and dimension checks on top of a
//! provider.

mod cache;
mod remote;
mod stub;
mod table;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::CachingEmbedder;
pub use remote::RemoteEmbedder;
pub use stub::StubEmbedder;
pub use table::TableEmbedder;

use crate::error::{Error, Result};
use crate::http::{HttpFailure, RetryPolicy};
use crate::registry::Registry;

/// A fixed-length embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl From<Vec<f32>> for Embedding {
    fn from(values: Vec<f32>) -> Self {
        Embedding(values)
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine distance `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    cosine_similarity(u, v).map(|s| 1.0 - s)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding batch {batch} (inputs {start}..{end}) failed: {source}")]
    Batch {
        batch: usize,
        start: usize,
        end: usize,
        source: HttpFailure,
    },
    #[error("embedding dimension mismatch: provider declares {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("cannot embed empty text (input {index})")]
    EmptyInput { index: usize },
    #[error("non-finite embedding value for input {index}")]
    NonFinite { index: usize },
}

/// Source of embeddings. Implementations must be safe to call concurrently.
pub trait EmbeddingProvider: Send + Sync {
    /// Identity recorded in run manifests, e.g. `stub:seed=7,dim=64`.
    fn identity(&self) -> String;

    fn dim(&self) -> usize;

    /// Embeds one batch. Output is index-aligned with `texts`.
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Embedding>, HttpFailure>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Embedding>, HttpFailure> {
        (**self).embed_batch(texts)
    }
}

/// How texts are grouped into provider calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Batching {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for Batching {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

/// Embeds `texts` in batches, preserving input order.
///
/// Up to `batching.max_in_flight` batches are requested concurrently. The
/// first failing batch (lowest index) is reported.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batching: Batching,
) -> std::result::Result<Vec<Embedding>, EmbedError> {
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyInput { index });
    }
    let batch_size = batching.batch_size.max(1);
    let batches: Vec<&[String]> = texts.chunks(batch_size).collect();
    let results: Mutex<Vec<Option<std::result::Result<Vec<Embedding>, EmbedError>>>> =
        Mutex::new(vec![None; batches.len()]);

    let run = |b: usize| {
        let start = b * batch_size;
        let end = start + batches[b].len();
        let out = provider
            .embed_batch(batches[b])
            .map_err(|source| EmbedError::Batch {
                batch: b,
                start,
                end,
                source,
            })
            .and_then(|vs| {
                if vs.len() != end - start {
                    return Err(EmbedError::Batch {
                        batch: b,
                        start,
                        end,
                        source: HttpFailure::Malformed(format!(
                            "expected {} embeddings, got {}",
                            end - start,
                            vs.len()
                        )),
                    });
                }
                Ok(vs)
            });
        results.lock().expect("result slots poisoned")[b] = Some(out);
    };

    let workers = batching.max_in_flight.max(1).min(batches.len());
    if workers <= 1 {
        (0..batches.len()).for_each(run);
    } else {
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    if b >= batches.len() {
                        break;
                    }
                    run(b);
                });
            }
        });
    }

    let dim = provider.dim();
    let mut out = Vec::with_capacity(texts.len());
    for slot in results.into_inner().expect("result slots poisoned") {
        out.extend(slot.expect("every batch ran")?);
    }
    for (index, e) in out.iter().enumerate() {
        if e.dim() != dim {
            return Err(EmbedError::Dimension {
                expected: dim,
                actual: e.dim(),
            });
        }
        if e.0.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite { index });
        }
    }
    Ok(out)
}

/// Embeds a single text.
pub fn embed_one(
    provider: &dyn EmbeddingProvider,
    text: &str,
) -> std::result::Result<Embedding, EmbedError> {
    let mut v = embed_texts(provider, &[text.to_string()], Batching::default())?;
    Ok(v.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    /// Registered provider name: `stub` or `remote`.
    pub kind: String,
    pub endpoint_url: String,
    pub model_name: String,
    pub dim: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub seed: u64,
    /// Memoize embeddings by content hash.
    pub cache: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: "stub".into(),
            endpoint_url: "http://localhost:11434".into(),
            model_name: "nomic-embed-text".into(),
            dim: 64,
            batch_size: 32,
            max_in_flight: 4,
            timeout_ms: 60_000,
            retries: 3,
            backoff_ms: 200,
            seed: 0,
            cache: true,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("embedding.batch_size must be >= 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("embedding.dim must be >= 2".into()));
        }
        Ok(())
    }

    pub fn batching(&self) -> Batching {
        Batching {
            batch_size: self.batch_size,
            max_in_flight: self.max_in_flight,
        }
    }

    pub(crate) fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retries.max(1),
            base_backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

pub type EmbedderRegistry = Registry<ProviderConfig, dyn EmbeddingProvider>;

/// Registry with the built-in `stub` and `remote` providers.
pub fn embedder_registry() -> EmbedderRegistry {
    let mut reg = EmbedderRegistry::new("embedding provider");
    reg.register("stub", |c: &ProviderConfig| {
        Ok(Box::new(StubEmbedder::new(c.seed, c.dim)) as Box<dyn EmbeddingProvider>)
    });
    reg.register("remote", |c: &ProviderConfig| {
        Ok(Box::new(RemoteEmbedder::new(c)) as Box<dyn EmbeddingProvider>)
    });
    reg
}

/// Builds the provider named by `config.kind`, wrapped in a cache when
/// `config.cache` is set.
pub fn build_embedder(config: &ProviderConfig) -> Result<Box<dyn EmbeddingProvider>> {
    config.validate()?;
    let inner = embedder_registry().build(&config.kind, config)?;
    Ok(if config.cache {
        Box::new(CachingEmbedder::new(inner))
    } else {
        inner
    })
}
