//! Chat-completion clients.

mod remote;
mod stub;

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use remote::RemoteLlm;
pub use stub::{StubLlm, StubMode, StubRule, StubScript};

use crate::error::Result;
use crate::http::{HttpFailure, RetryPolicy};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmRequest {
    pub system: String,
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl LlmRequest {
    /// A pipeline-internal request (extraction, summarization, scoring),
    /// always at temperature 0.
    pub fn internal(system: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            prompt: prompt.into(),
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("LLM request failed: {0}")]
    Http(#[from] HttpFailure),
    #[error("LLM returned an empty response")]
    EmptyResponse,
}

pub trait LlmClient: Send + Sync {
    /// Identity recorded in run manifests.
    fn identity(&self) -> String;

    /// One raw round trip.
    fn respond(&self, req: &LlmRequest) -> Result<String, LlmError>;

    /// [`respond`](Self::respond), rejecting blank output.
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        let out = self.respond(req)?;
        if out.trim().is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        Ok(out)
    }
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn respond(&self, req: &LlmRequest) -> Result<String, LlmError> {
        (**self).respond(req)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub(crate) struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    pub(crate) fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut active = self.active.lock().expect("semaphore poisoned");
            while *active >= self.limit {
                active = self.freed.wait(active).expect("semaphore poisoned");
            }
            *active += 1;
        }
        let out = f();
        *self.active.lock().expect("semaphore poisoned") -= 1;
        self.freed.notify_one();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// Registered client name: `stub` or `remote`.
    pub kind: String,
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Rule file for the stub client; absent means echo mode.
    pub stub_script: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            kind: "stub".into(),
            endpoint_url: "http://localhost:11434".into(),
            model_name: "llama3.2".into(),
            timeout_ms: 120_000,
            retries: 3,
            backoff_ms: 200,
            max_in_flight: 4,
            stub_script: None,
        }
    }
}

impl LlmConfig {
    pub(crate) fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retries.max(1),
            base_backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

pub type LlmRegistry = Registry<LlmConfig, dyn LlmClient>;

/// Registry with the built-in `stub` and `remote` clients.
pub fn llm_registry() -> LlmRegistry {
    let mut reg = LlmRegistry::new("LLM provider");
    reg.register("stub", |c: &LlmConfig| {
        let script = match &c.stub_script {
            Some(path) => StubScript::load(path)?,
            None => StubScript::echo(),
        };
        Ok(Box::new(StubLlm::new(script)) as Box<dyn LlmClient>)
    });
    reg.register("remote", |c: &LlmConfig| {
        Ok(Box::new(RemoteLlm::new(c)) as Box<dyn LlmClient>)
    });
    reg
}

pub fn build_llm(config: &LlmConfig) -> Result<Box<dyn LlmClient>> {
    llm_registry().build(&config.kind, config)
}
