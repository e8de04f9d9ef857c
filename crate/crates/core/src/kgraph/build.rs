use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    detect_communities, extract_elements, merge_graphs, ranker_registry, summarize_community,
    Community, KnowledgeGraph,
};
use crate::chunker::Chunk;
use crate::embeddings::{embed_texts, Batching, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::llm::{LlmClient, LlmRequest};
use crate::text::count_tokens;

const CONDENSE_SYSTEM: &str = "\
You merge several descriptions of the same item into one comprehensive description.
Keep every distinct fact, remove repetition, and write in the third person.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    pub max_levels: usize,
    /// Community detection seed; configured at run level, not per section.
    #[serde(skip)]
    pub seed: u64,
    /// Merged descriptions longer than this many tokens are condensed by
    /// the LLM.
    pub description_cap: usize,
    /// Registered community ranker name.
    pub ranker: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_levels: 3,
            seed: 0,
            description_cap: 2000,
            ranker: "density".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBuild {
    pub graph: KnowledgeGraph,
    pub communities: Vec<Community>,
    pub build_time_sec: f64,
    /// One message per chunk whose extraction failed.
    pub chunk_failures: Vec<String>,
    pub skipped_records: usize,
    pub condensed: usize,
}

/// Condenses over-long entity and relation descriptions. Returns how many
/// descriptions were rewritten.
pub fn condense_descriptions(
    graph: &mut KnowledgeGraph,
    llm: &dyn LlmClient,
    cap: usize,
) -> Result<usize> {
    let condense = |label: &str, text: &str| -> Result<String> {
        let prompt = format!("ITEM: {label}\n\nDESCRIPTIONS:\n{text}");
        Ok(llm
            .complete(&LlmRequest::internal(CONDENSE_SYSTEM, prompt))?
            .trim()
            .to_string())
    };
    let mut n = 0;
    for e in graph.entities.values_mut() {
        if count_tokens(&e.description) > cap {
            e.description = condense(&e.name, &e.description)?;
            n += 1;
        }
    }
    for r in &mut graph.relations {
        if count_tokens(&r.description) > cap {
            r.description = condense(&format!("{} - {}", r.src, r.dst), &r.description)?;
            n += 1;
        }
    }
    Ok(n)
}

/// Extracts, merges, detects communities and writes a report for every
/// community at every level.
///
/// Extraction failures of individual chunks are collected; the build only
/// fails when every chunk failed.
pub fn build_graph(
    chunks: &[Chunk],
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
    batching: Batching,
    options: &BuildOptions,
) -> Result<GraphBuild> {
    let started = Instant::now();
    let ranker = ranker_registry().build(&options.ranker, &())?;

    let results: Vec<Result<_>> = chunks.par_iter().map(|c| extract_elements(c, llm)).collect();
    let mut partials = Vec::new();
    let mut failures = Vec::new();
    let mut skipped_records = 0;
    for r in results {
        match r {
            Ok(x) => {
                skipped_records += x.skipped;
                partials.push(x.graph);
            }
            Err(e) => failures.push(e),
        }
    }
    if !chunks.is_empty() && partials.is_empty() {
        let failed = failures.len();
        return Err(Error::AllExtractionsFailed {
            failed,
            first: Box::new(failures.remove(0)),
        });
    }

    let mut graph = merge_graphs(&partials);
    let condensed = condense_descriptions(&mut graph, llm, options.description_cap)?;

    let texts: Vec<String> = graph.entities.values().map(|e| e.search_text()).collect();
    if !texts.is_empty() {
        let vecs = embed_texts(embedder, &texts, batching)?;
        for (e, v) in graph.entities.values_mut().zip(vecs) {
            e.embedding = Some(v);
        }
    }

    let mut communities = detect_communities(&graph, options.max_levels, options.seed);
    let reports: Vec<Result<_>> = communities
        .par_iter()
        .map(|c| summarize_community(c, &graph, llm, embedder, ranker.as_ref()))
        .collect();
    for (c, r) in communities.iter_mut().zip(reports) {
        c.report = Some(r?);
    }

    Ok(GraphBuild {
        graph,
        communities,
        build_time_sec: started.elapsed().as_secs_f64(),
        chunk_failures: failures.iter().map(ToString::to_string).collect(),
        skipped_records,
        condensed,
    })
}
