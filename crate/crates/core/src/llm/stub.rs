use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{LlmClient, LlmError, LlmRequest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubMode {
    #[default]
    Script,
    Echo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    /// Substring (or regex when `regex` is set) searched for in the prompt.
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default)]
    pub regex: bool,
    /// Optional substring the system message must also contain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub response: String,
}

/// Scripted responses for the stub client. The first matching rule wins;
/// unmatched prompts get `default`, or an echo when no default is set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubScript {
    #[serde(default)]
    pub mode: StubMode,
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

impl StubScript {
    pub fn echo() -> Self {
        Self {
            mode: StubMode::Echo,
            ..Default::default()
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(StubRule {
            pattern: pattern.into(),
            regex: false,
            system: None,
            response: response.into(),
        });
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

enum Matcher {
    Substring(String),
    Pattern(Regex),
}

/// Deterministic offline chat client.
pub struct StubLlm {
    script: StubScript,
    matchers: Vec<Matcher>,
    calls: AtomicUsize,
}

impl StubLlm {
    /// Panics on an invalid regex; use [`StubLlm::try_new`] for untrusted
    /// scripts.
    pub fn new(script: StubScript) -> Self {
        Self::try_new(script).expect("invalid stub rule regex")
    }

    pub fn try_new(script: StubScript) -> Result<Self> {
        let matchers = script
            .rules
            .iter()
            .map(|r| {
                if r.regex {
                    Regex::new(&r.pattern)
                        .map(Matcher::Pattern)
                        .map_err(|e| Error::Config(format!("stub rule regex: {e}")))
                } else {
                    Ok(Matcher::Substring(r.pattern.clone()))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            script,
            matchers,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn echo() -> Self {
        Self::new(StubScript::echo())
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmClient for StubLlm {
    fn identity(&self) -> String {
        format!("stub:{:?}:rules={}", self.script.mode, self.script.rules.len()).to_lowercase()
    }

    fn respond(&self, req: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.script.mode == StubMode::Echo {
            return Ok(req.prompt.clone());
        }
        let hit = self.script.rules.iter().zip(&self.matchers).find(|(rule, m)| {
            let prompt_ok = match m {
                Matcher::Substring(s) => req.prompt.contains(s.as_str()),
                Matcher::Pattern(re) => re.is_match(&req.prompt),
            };
            prompt_ok && rule.system.as_ref().is_none_or(|s| req.system.contains(s.as_str()))
        });
        Ok(match (hit, &self.script.default) {
            (Some((rule, _)), _) => rule.response.clone(),
            (None, Some(default)) => default.clone(),
            (None, None) => req.prompt.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_returns_prompt() {
        let llm = StubLlm::echo();
        let out = llm
            .complete(&LlmRequest::internal("sys", "context...\nQUESTION: hi"))
            .unwrap();
        assert!(out.contains("hi"));
    }

    #[test]
    fn first_matching_rule_wins() {
        let llm = StubLlm::new(
            StubScript::default()
                .rule("summarize", "SUMMARY")
                .rule("summ", "second")
                .with_default("fallback"),
        );
        let req = |p: &str| LlmRequest::internal("", p);
        assert_eq!(llm.complete(&req("please summarize this")).unwrap(), "SUMMARY");
        assert_eq!(llm.complete(&req("other")).unwrap(), "fallback");
        assert_eq!(llm.calls(), 2);
    }

    #[test]
    fn regex_and_system_filters() {
        let mut script = StubScript::default();
        script.rules.push(StubRule {
            pattern: r"^Q\d+$".into(),
            regex: true,
            system: Some("rate".into()),
            response: "85".into(),
        });
        let llm = StubLlm::new(script);
        assert_eq!(llm.complete(&LlmRequest::internal("rate it", "Q12")).unwrap(), "85");
        // Without a default the client echoes.
        assert_eq!(llm.complete(&LlmRequest::internal("other", "Q12")).unwrap(), "Q12");
    }

    #[test]
    fn empty_response_is_an_error() {
        let llm = StubLlm::new(StubScript::default().with_default("  "));
        assert_eq!(
            llm.complete(&LlmRequest::internal("", "x")),
            Err(LlmError::EmptyResponse)
        );
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"{"mode":"script","rules":[{"match":"a","response":"b"}],"default":"d"}"#,
        )
        .unwrap();
        let script = StubScript::load(&path).unwrap();
        assert_eq!(script, StubScript::default().rule("a", "b").with_default("d"));
        std::fs::write(&path, r#"{"mode":"script","oops":1}"#).unwrap();
        assert!(matches!(StubScript::load(&path), Err(Error::Parse { .. })));
    }
}
