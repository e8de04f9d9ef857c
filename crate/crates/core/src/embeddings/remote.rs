use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Embedding, EmbeddingProvider, ProviderConfig};
use crate::http::{self, HttpFailure, RetryPolicy};

/// Client for servers exposing `POST /api/embed`
/// (`{"model", "input": [..]}` -> `{"embeddings": [[..], ..]}`).
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    dim: usize,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

impl RemoteEmbedder {
    pub fn new(config: &ProviderConfig) -> Self {
        Self {
            agent: http::agent(Duration::from_millis(config.timeout_ms)),
            url: http::join_url(&config.endpoint_url, "api/embed"),
            model: config.model_name.clone(),
            dim: config.dim,
            retry: config.retry_policy(),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn identity(&self) -> String {
        format!("remote:{}@{}", self.model, self.url)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, HttpFailure> {
        let body = json!({ "model": self.model, "input": texts });
        let value = http::post_json(&self.agent, &self.url, &body, &self.retry)?;
        let parsed: EmbedResponse =
            serde_json::from_value(value).map_err(|e| HttpFailure::Malformed(e.to_string()))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(HttpFailure::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.embeddings.len()
            )));
        }
        Ok(parsed.embeddings.into_iter().map(Embedding).collect())
    }
}
