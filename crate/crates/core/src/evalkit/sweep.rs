use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{fixed3, run_eval, to_fixed_json, EvalOptions, QaExample, Stat, STD_CONVENTION};
use crate::chunker::{chunk_corpus, ChunkingConfig, Document};
use crate::embeddings::Batching;
use crate::error::{Error, Result};
use crate::kgraph::{build_graph, BuildOptions};
use crate::retrieval::{Mode, Providers, RetrievalConfig, Stores};
use crate::store::ChunkIndex;

pub const SWEEP_COLUMNS: [&str; 11] = [
    "buffer",
    "time_sec",
    "chunks",
    "nodes",
    "edges",
    "correctness_mean",
    "correctness_std",
    "similarity_mean",
    "similarity_std",
    "relevancy_mean",
    "relevancy_std",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepTiming {
    /// Wall-clock seconds for chunking plus graph construction.
    Wall,
    /// Time column written as zero, for byte-reproducible output.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub chunking: ChunkingConfig,
    pub build: BuildOptions,
    pub retrieval: RetrievalConfig,
    pub eval: EvalOptions,
    pub mode: Mode,
    pub timing: SweepTiming,
    pub batching: Batching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub buffer: usize,
    pub time_sec: Option<f64>,
    pub chunks: Option<usize>,
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
    pub correctness: Option<Stat>,
    pub similarity: Option<Stat>,
    pub relevancy: Option<Stat>,
    /// Examples that failed within an otherwise complete run.
    pub failures: usize,
    /// Set when the run for this buffer size did not complete.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(buffer: usize, error: &Error) -> Self {
        Self {
            buffer,
            time_sec: None,
            chunks: None,
            nodes: None,
            edges: None,
            correctness: None,
            similarity: None,
            relevancy: None,
            failures: 0,
            error: Some(error.to_string()),
        }
    }

    fn csv_line(&self) -> String {
        let count = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
        let stat = |s: Option<Stat>| [fixed3(s.map(|s| s.mean)), fixed3(s.map(|s| s.std))];
        let mut fields = vec![
            self.buffer.to_string(),
            fixed3(self.time_sec),
            count(self.chunks),
            count(self.nodes),
            count(self.edges),
        ];
        for s in [self.correctness, self.similarity, self.relevancy] {
            fields.extend(stat(s));
        }
        fields.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: Mode,
    pub timing: SweepTiming,
    pub std_convention: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = SWEEP_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        to_fixed_json(self)
    }
}

fn sweep_one(
    buffer: usize,
    docs: &[Document],
    qa: &[QaExample],
    config: &SweepConfig,
    providers: Providers<'_>,
) -> Result<SweepRow> {
    let started = Instant::now();
    let chunking = config.chunking.clone().with_buffer(buffer);
    let chunks = chunk_corpus(docs, &chunking, providers.embedder, config.batching)?;
    let index = ChunkIndex::new(chunks)?;
    let build = build_graph(&index.chunks, providers.llm, providers.embedder, config.batching, &config.build)?;
    let elapsed = started.elapsed().as_secs_f64();

    let (chunks, nodes, edges) = (index.len(), build.graph.node_count(), build.graph.edge_count());
    let stores = Stores::new()
        .with_index(index)
        .with_graph(build.graph)
        .with_communities(build.communities);
    let report = run_eval(qa, config.mode.as_str(), &stores, providers, &config.retrieval, &config.eval)?;
    Ok(SweepRow {
        buffer,
        time_sec: Some(match config.timing {
            SweepTiming::Wall => elapsed,
            SweepTiming::Fixed => 0.0,
        }),
        chunks: Some(chunks),
        nodes: Some(nodes),
        edges: Some(edges),
        correctness: report.summary.correctness,
        similarity: report.summary.similarity,
        relevancy: report.summary.relevancy,
        failures: report.failures,
        error: None,
    })
}

/// For each buffer size: chunk, build the graph, evaluate. A buffer size
/// whose run fails yields an error row and the sweep moves on.
pub fn buffer_sweep(
    docs: &[Document],
    qa: &[QaExample],
    buffers: &[usize],
    config: &SweepConfig,
    providers: Providers<'_>,
) -> Result<SweepReport> {
    if buffers.is_empty() {
        return Err(Error::Config("at least one buffer size is required".into()));
    }
    config.chunking.validate()?;
    config.retrieval.validate()?;
    config.eval.validate()?;
    let rows = buffers
        .iter()
        .map(|&b| sweep_one(b, docs, qa, config, providers).unwrap_or_else(|e| SweepRow::failed(b, &e)))
        .collect();
    Ok(SweepReport {
        mode: config.mode,
        timing: config.timing,
        std_convention: STD_CONVENTION.into(),
        rows,
    })
}
