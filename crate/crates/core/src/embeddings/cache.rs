use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingProvider};
use crate::http::HttpFailure;

/// Memoizes another provider's output by content hash. No eviction.
pub struct CachingEmbedder<P> {
    inner: P,
    memo: Mutex<HashMap<[u8; 32], Embedding>>,
}

impl<P: EmbeddingProvider> CachingEmbedder<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.memo.lock().expect("embedding cache poisoned").len()
    }
}

fn key(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachingEmbedder<P> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, HttpFailure> {
        let keys: Vec<[u8; 32]> = texts.iter().map(|t| key(t)).collect();
        let missing: Vec<String> = {
            let memo = self.memo.lock().expect("embedding cache poisoned");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !memo.contains_key(*k) && seen.insert(**k))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            if fresh.len() != missing.len() {
                return Err(HttpFailure::Malformed(format!(
                    "expected {} embeddings, got {}",
                    missing.len(),
                    fresh.len()
                )));
            }
            let mut memo = self.memo.lock().expect("embedding cache poisoned");
            for (t, e) in missing.iter().zip(fresh) {
                memo.insert(key(t), e);
            }
        }
        let memo = self.memo.lock().expect("embedding cache poisoned");
        Ok(keys.iter().map(|k| memo[k].clone()).collect())
    }
}
