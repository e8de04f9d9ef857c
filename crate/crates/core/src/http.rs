//! Blocking JSON-over-HTTP helper shared by the remote providers.

use std::thread;
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HttpFailure {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff: Duration::from_millis(200),
        }
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

/// POSTs `body` and parses a JSON response. Only transport failures are
/// retried; an HTTP error status is returned immediately.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    body: &Value,
    retry: &RetryPolicy,
) -> Result<Value, HttpFailure> {
    let attempts = retry.attempts.max(1);
    let mut last = HttpFailure::Transport("no attempt made".into());
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(retry.base_backoff * 2u32.pow(attempt - 1));
        }
        match agent.post(url).send_json(body) {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| HttpFailure::Transport(e.to_string()))?;
                return serde_json::from_str(&text)
                    .map_err(|e| HttpFailure::Malformed(format!("{e}: {text}")));
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                return Err(HttpFailure::Status { status, body });
            }
            Err(ureq::Error::Transport(t)) => last = HttpFailure::Transport(t.to_string()),
        }
    }
    Err(last)
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
