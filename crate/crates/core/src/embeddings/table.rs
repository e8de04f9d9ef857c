use std::collections::HashMap;

use super::{Embedding, EmbeddingProvider, StubEmbedder};
use crate::http::HttpFailure;

/// Returns planted vectors for known texts and falls back to a
/// [`StubEmbedder`] for everything else. Used to build fixtures with exact,
/// hand-computable similarities.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    table: HashMap<String, Embedding>,
    fallback: StubEmbedder,
    dim: usize,
}

impl TableEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            table: HashMap::new(),
            fallback: StubEmbedder::new(0, dim),
            dim,
        }
    }

    /// Plants `vector` for `text`. Panics if the dimension is wrong.
    pub fn with(mut self, text: impl Into<String>, vector: Vec<f32>) -> Self {
        self.insert(text, vector);
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f32>) {
        assert_eq!(vector.len(), self.dim, "planted vector has wrong dimension");
        self.table.insert(text.into(), Embedding(vector));
    }

    pub fn get(&self, text: &str) -> Embedding {
        self.table
            .get(text)
            .cloned()
            .unwrap_or_else(|| self.fallback.embed(text))
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn identity(&self) -> String {
        format!("table:entries={},dim={}", self.table.len(), self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, HttpFailure> {
        Ok(texts.iter().map(|t| self.get(t)).collect())
    }
}
