use std::time::Duration;

use serde_json::json;

use super::{InFlight, LlmClient, LlmConfig, LlmError, LlmRequest};
use crate::http::{self, HttpFailure, RetryPolicy};

/// Client for servers exposing `POST /api/chat`
/// (`{"model", "messages", "options": {"temperature"}}` ->
/// `{"message": {"content"}}`).
pub struct RemoteLlm {
    agent: ureq::Agent,
    url: String,
    model: String,
    retry: RetryPolicy,
    gate: InFlight,
}

impl RemoteLlm {
    pub fn new(config: &LlmConfig) -> Self {
        Self {
            agent: http::agent(Duration::from_millis(config.timeout_ms)),
            url: http::join_url(&config.endpoint_url, "api/chat"),
            model: config.model_name.clone(),
            retry: config.retry_policy(),
            gate: InFlight::new(config.max_in_flight),
        }
    }
}

impl LlmClient for RemoteLlm {
    fn identity(&self) -> String {
        format!("remote:{}@{}", self.model, self.url)
    }

    fn respond(&self, req: &LlmRequest) -> Result<String, LlmError> {
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({ "role": "system", "content": req.system }));
        }
        messages.push(json!({ "role": "user", "content": req.prompt }));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "options": { "temperature": req.temperature, "num_predict": req.max_tokens },
            "stream": false,
        });
        let value = self
            .gate
            .run(|| http::post_json(&self.agent, &self.url, &body, &self.retry))?;
        value
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                LlmError::Http(HttpFailure::Malformed(format!(
                    "missing message.content in {value}"
                )))
            })
    }
}
