use super::{Community, CommunityReport, KnowledgeGraph};
use crate::embeddings::{embed_one, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::llm::{LlmClient, LlmRequest};
use crate::registry::Registry;

pub const SUMMARY_SYSTEM: &str = "\
You write community reports for a knowledge graph.
The user lists the entities of one community with their descriptions, then the relationships among them.
Write a factual report covering the key entities, how they relate, and what the community is about.
Separate distinct findings with blank lines. Do not invent facts.";

/// Scores how important and central a community is.
pub trait CommunityRanker: Send + Sync {
    fn name(&self) -> &'static str;
    fn rank(&self, community: &Community, graph: &KnowledgeGraph) -> f64;
}

/// Internal edge weight divided by `1 + member count`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DensityRanker;

impl CommunityRanker for DensityRanker {
    fn name(&self) -> &'static str {
        "density"
    }

    fn rank(&self, community: &Community, _graph: &KnowledgeGraph) -> f64 {
        community.internal_weight() as f64 / (1.0 + community.size() as f64)
    }
}

/// Member count.
#[derive(Debug, Clone, Copy, Default)]
pub struct SizeRanker;

impl CommunityRanker for SizeRanker {
    fn name(&self) -> &'static str {
        "size"
    }

    fn rank(&self, community: &Community, _graph: &KnowledgeGraph) -> f64 {
        community.size() as f64
    }
}

pub type RankerRegistry = Registry<(), dyn CommunityRanker>;

pub fn ranker_registry() -> RankerRegistry {
    let mut reg = RankerRegistry::new("community ranker");
    reg.register("density", |_: &()| Ok(Box::new(DensityRanker) as Box<dyn CommunityRanker>));
    reg.register("size", |_: &()| Ok(Box::new(SizeRanker) as Box<dyn CommunityRanker>));
    reg
}

/// Member entity descriptions in id order, then internal relation
/// descriptions in `(src, dst)` order. The relation block is omitted when
/// the community has no internal relations.
pub fn community_prompt(community: &Community, graph: &KnowledgeGraph) -> Result<String> {
    let mut out = String::from("ENTITIES:\n");
    for id in &community.member_entities {
        let e = graph.entities.get(id).ok_or_else(|| {
            Error::Config(format!("community {} references unknown entity {id}", community.id))
        })?;
        out.push_str(&format!("{}: {}\n", e.name, e.description));
    }
    let mut rels: Vec<_> = community.internal_relations.iter().collect();
    rels.sort_by(|a, b| a.key().cmp(&b.key()));
    if !rels.is_empty() {
        out.push_str("\nRELATIONS:\n");
        for r in rels {
            out.push_str(&format!("{} - {}: {}\n", r.src, r.dst, r.description));
        }
    }
    Ok(out)
}

/// Summarizes a community's entity and relation descriptions with the LLM.
pub fn summarize_community(
    community: &Community,
    graph: &KnowledgeGraph,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
    ranker: &dyn CommunityRanker,
) -> Result<CommunityReport> {
    let wrap = |e: Error| Error::Summarize {
        community_id: community.id.clone(),
        source: Box::new(e),
    };
    let prompt = community_prompt(community, graph).map_err(wrap)?;
    let summary_text = llm
        .complete(&LlmRequest::internal(SUMMARY_SYSTEM, prompt))
        .map_err(|e| wrap(e.into()))?
        .trim()
        .to_string();
    let embedding = embed_one(embedder, &summary_text).map_err(|e| wrap(e.into()))?;
    Ok(CommunityReport {
        community_id: community.id.clone(),
        summary_text,
        embedding,
        rank: ranker.rank(community, graph).max(0.0),
    })
}
