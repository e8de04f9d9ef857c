//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunker::ChunkingConfig;
use crate::embeddings::ProviderConfig;
use crate::error::{Error, Result};
use crate::evalkit::{EvalOptions, SweepTiming};
use crate::kgraph::{ranker_registry, BuildOptions};
use crate::llm::LlmConfig;
use crate::retrieval::{Mode, RetrievalConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestOptions {
    /// Drop documents whose whitespace- and case-normalized text equals an
    /// earlier document's.
    pub merge_duplicates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingSetting {
    /// Fixed when both providers are stubs, wall-clock otherwise.
    Auto,
    Wall,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub buffers: Vec<usize>,
    pub timing: TimingSetting,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            buffers: vec![0, 2, 5],
            timing: TimingSetting::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for community detection.
    pub seed: u64,
    /// Retrieval mode for `query`, `eval` and `sweep`.
    pub mode: Mode,
    pub embedding: ProviderConfig,
    pub llm: LlmConfig,
    pub ingest: IngestOptions,
    pub chunking: ChunkingConfig,
    pub graph: BuildOptions,
    pub retrieval: RetrievalConfig,
    pub eval: EvalOptions,
    pub sweep: SweepSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Local,
            embedding: ProviderConfig::default(),
            llm: LlmConfig::default(),
            ingest: IngestOptions::default(),
            chunking: ChunkingConfig::default(),
            graph: BuildOptions::default(),
            retrieval: RetrievalConfig::default(),
            eval: EvalOptions::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `path`; relative `llm.stub_script` paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("configuration error: "))))?;
        if let (Some(script), Some(dir)) = (&cfg.llm.stub_script, path.parent()) {
            if script.is_relative() {
                cfg.llm.stub_script = Some(dir.join(script));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.embedding.validate()?;
        self.chunking.validate()?;
        self.retrieval.validate()?;
        self.eval.validate()?;
        if self.graph.max_levels < 1 {
            return Err(Error::Config("graph.max_levels must be >= 1".into()));
        }
        if !ranker_registry().contains(&self.graph.ranker) {
            return Err(Error::Config(format!(
                "graph.ranker '{}' is unknown; expected one of: {}",
                self.graph.ranker,
                ranker_registry().names().collect::<Vec<_>>().join(", ")
            )));
        }
        if self.sweep.buffers.is_empty() {
            return Err(Error::Config("sweep.buffers must not be empty".into()));
        }
        Ok(())
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            seed: self.seed,
            ..self.graph.clone()
        }
    }

    pub fn sweep_timing(&self) -> SweepTiming {
        match self.sweep.timing {
            TimingSetting::Wall => SweepTiming::Wall,
            TimingSetting::Fixed => SweepTiming::Fixed,
            TimingSetting::Auto if self.embedding.kind == "stub" && self.llm.kind == "stub" => SweepTiming::Fixed,
            TimingSetting::Auto => SweepTiming::Wall,
        }
    }

    /// Switches the LLM to the scripted stub with rules from `script`.
    pub fn use_stub_llm(&mut self, script: PathBuf) {
        self.llm.kind = "stub".into();
        self.llm.stub_script = Some(script);
    }

    pub fn use_stub_embedder(&mut self) {
        self.embedding.kind = "stub".into();
    }
}
