//! Naive, local-graph and global-community retrieval, each producing a
//! ranked context that fits a token budget.

mod global;
mod local;
mod naive;
mod prompt;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

pub use global::{
    global_search, parse_rating, rank_reports, score_point, split_points, PointScore, ReportPoint,
    RATING_SYSTEM,
};
pub use local::local_search;
pub use naive::naive_search;
pub use prompt::{assemble_prompt, template_names, Prompt, NO_CONTEXT};

use crate::embeddings::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::kgraph::{Community, KnowledgeGraph};
use crate::llm::{LlmClient, LlmRequest};
use crate::registry::Registry;
use crate::store::{ChunkIndex, CHUNKS, COMMUNITIES, ENTITIES};
use crate::text::count_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default)]
    pub history: Vec<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            history: Vec::new(),
        }
    }

    pub fn with_history(mut self, history: Vec<String>) -> Self {
        self.history = history;
        self
    }

    /// History lines followed by the question, newline-joined. This is the
    /// text embedded for similarity search.
    pub fn search_text(&self) -> String {
        self.history
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.text.as_str()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Config("query text is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Naive,
    Local,
    Global,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Naive, Mode::Local, Mode::Global];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Local => "local",
            Mode::Global => "global",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'; expected naive, local or global")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Chunk,
    Entity,
    ReportPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub kind: ItemKind,
    pub text: String,
    pub score: f64,
    pub source_id: String,
    pub tokens: usize,
}

impl ContextItem {
    pub fn new(kind: ItemKind, source_id: impl Into<String>, text: impl Into<String>, score: f64) -> Self {
        let text = text.into();
        Self {
            kind,
            tokens: count_tokens(&text),
            text,
            score,
            source_id: source_id.into(),
        }
    }
}

/// Score descending, then source id, then kind.
pub fn rank_order(a: &ContextItem, b: &ContextItem) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.source_id.cmp(&b.source_id))
        .then_with(|| a.kind.cmp(&b.kind))
}

/// Sorts by [`rank_order`] and keeps the first `k`.
pub fn top_k(mut items: Vec<ContextItem>, k: usize) -> Vec<ContextItem> {
    items.sort_by(rank_order);
    items.truncate(k);
    items
}

/// Greedy packing in rank order: an item that would overflow the budget is
/// skipped and scanning continues. Returns the kept items, their token
/// total and how many were dropped.
pub fn pack(ranked: Vec<ContextItem>, window_l: usize) -> (Vec<ContextItem>, usize, usize) {
    let mut total = 0;
    let mut dropped = 0;
    let mut kept = Vec::new();
    for item in ranked {
        if total + item.tokens <= window_l {
            total += item.tokens;
            kept.push(item);
        } else {
            dropped += 1;
        }
    }
    (kept, total, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// The LLM rates each point 0-100.
    Llm,
    /// Cosine similarity mapped from [-1, 1] to [0, 1].
    Embedding,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextMeta {
    /// Items that passed filtering, before top-k and packing.
    pub candidates: usize,
    pub dropped_for_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_scoring: Option<ScoreMode>,
    /// Points whose LLM rating could not be parsed.
    pub scoring_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub mode: Mode,
    pub items: Vec<ContextItem>,
    pub total_tokens: usize,
    pub window_l: usize,
    pub meta: ContextMeta,
}

impl RetrievedContext {
    pub fn empty(mode: Mode, window_l: usize) -> Self {
        Self {
            mode,
            items: Vec::new(),
            total_tokens: 0,
            window_l,
            meta: ContextMeta::default(),
        }
    }

    /// Ranks `candidates`, keeps the top `k`, then packs them into the
    /// budget.
    pub fn from_candidates(mode: Mode, candidates: Vec<ContextItem>, k: usize, window_l: usize) -> Self {
        let n = candidates.len();
        let (items, total_tokens, dropped) = pack(top_k(candidates, k), window_l);
        Self {
            mode,
            items,
            total_tokens,
            window_l,
            meta: ContextMeta {
                candidates: n,
                dropped_for_budget: dropped,
                ..Default::default()
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NaiveConfig {
    pub k: usize,
    pub window_l: usize,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        Self { k: 5, window_l: 4096 }
    }
}

/// How a chunk qualifies through a candidate entity in local search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkLink {
    /// Cosine similarity of chunk and entity embeddings above `tau_d`.
    Embedding,
    /// The chunk is one the entity was extracted from.
    Linkage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalSearchConfig {
    pub tau_e: f64,
    pub tau_d: f64,
    pub k: usize,
    pub window_l: usize,
    pub chunk_link: ChunkLink,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            tau_e: 0.2,
            tau_d: 0.2,
            k: 10,
            window_l: 4096,
            chunk_link: ChunkLink::Embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalSearchConfig {
    /// Reports kept after ranking (K).
    pub top_k_reports: usize,
    /// Points kept after scoring.
    pub k_points: usize,
    pub window_l: usize,
    /// Weight of normalized community rank against query similarity when
    /// ranking reports.
    pub rank_weight: f64,
    /// Sentences per point within a report paragraph.
    pub point_sentences: usize,
    pub scoring: ScoreMode,
    /// Restrict to one hierarchy level; all levels when absent.
    pub level: Option<usize>,
}

impl Default for GlobalSearchConfig {
    fn default() -> Self {
        Self {
            top_k_reports: 5,
            k_points: 10,
            window_l: 4096,
            rank_weight: 0.3,
            point_sentences: 3,
            scoring: ScoreMode::Llm,
            level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub naive: NaiveConfig,
    pub local: LocalSearchConfig,
    pub global: GlobalSearchConfig,
    pub template: String,
    pub answer_temperature: f64,
    pub answer_max_tokens: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            naive: NaiveConfig::default(),
            local: LocalSearchConfig::default(),
            global: GlobalSearchConfig::default(),
            template: "default".into(),
            answer_temperature: 0.0,
            answer_max_tokens: 1024,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("retrieval.{m}")));
        for (name, w) in [
            ("naive.window_l", self.naive.window_l),
            ("local.window_l", self.local.window_l),
            ("global.window_l", self.global.window_l),
        ] {
            if w == 0 {
                return bad(&format!("{name} must be > 0"));
            }
        }
        for (name, t) in [("local.tau_e", self.local.tau_e), ("local.tau_d", self.local.tau_d)] {
            if !(-1.0..=1.0).contains(&t) {
                return bad(&format!("{name} must be in [-1, 1]"));
            }
        }
        if self.global.top_k_reports < 1 {
            return bad("global.top_k_reports must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.global.rank_weight) {
            return bad("global.rank_weight must be in [0, 1]");
        }
        if self.global.point_sentences < 1 {
            return bad("global.point_sentences must be >= 1");
        }
        if !template_names().contains(&self.template.as_str()) {
            return bad(&format!(
                "template '{}' is unknown; expected one of: {}",
                self.template,
                template_names().join(", ")
            ));
        }
        if !(0.0..=2.0).contains(&self.answer_temperature) {
            return bad("answer_temperature must be in [0, 2]");
        }
        if self.answer_max_tokens == 0 {
            return bad("answer_max_tokens must be > 0");
        }
        Ok(())
    }
}

/// How many times each store was read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessCounts {
    pub index: usize,
    pub graph: usize,
    pub communities: usize,
}

/// Read-only artifacts available to retrieval, with access counters.
#[derive(Debug, Default)]
pub struct Stores {
    index: Option<ChunkIndex>,
    graph: Option<KnowledgeGraph>,
    communities: Option<Vec<Community>>,
    index_reads: AtomicUsize,
    graph_reads: AtomicUsize,
    community_reads: AtomicUsize,
}

fn missing(what: &str, file: &str) -> Error {
    Error::Config(format!("missing {what} ({file}); run the stage that produces it first"))
}

impl Stores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_index(mut self, index: ChunkIndex) -> Self {
        self.index = Some(index);
        self
    }

    pub fn with_graph(mut self, graph: KnowledgeGraph) -> Self {
        self.graph = Some(graph);
        self
    }

    pub fn with_communities(mut self, communities: Vec<Community>) -> Self {
        self.communities = Some(communities);
        self
    }

    pub fn index(&self) -> Result<&ChunkIndex> {
        self.index_reads.fetch_add(1, AtomicOrdering::Relaxed);
        self.index.as_ref().ok_or_else(|| missing("chunk index", CHUNKS))
    }

    pub fn graph(&self) -> Result<&KnowledgeGraph> {
        self.graph_reads.fetch_add(1, AtomicOrdering::Relaxed);
        self.graph.as_ref().ok_or_else(|| missing("knowledge graph", ENTITIES))
    }

    pub fn communities(&self) -> Result<&[Community]> {
        self.community_reads.fetch_add(1, AtomicOrdering::Relaxed);
        self.communities
            .as_deref()
            .ok_or_else(|| missing("community reports", COMMUNITIES))
    }

    pub fn access_counts(&self) -> AccessCounts {
        AccessCounts {
            index: self.index_reads.load(AtomicOrdering::Relaxed),
            graph: self.graph_reads.load(AtomicOrdering::Relaxed),
            communities: self.community_reads.load(AtomicOrdering::Relaxed),
        }
    }
}

/// Model providers a retriever may call.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub llm: &'a dyn LlmClient,
    pub embedder: &'a dyn EmbeddingProvider,
}

/// One retrieval strategy.
pub trait Retriever: Send + Sync {
    fn mode(&self) -> Mode;
    fn retrieve(&self, query: &Query, stores: &Stores, providers: Providers<'_>) -> Result<RetrievedContext>;
}

struct NaiveRetriever(NaiveConfig);
struct LocalRetriever(LocalSearchConfig);
struct GlobalRetriever(GlobalSearchConfig);

impl Retriever for NaiveRetriever {
    fn mode(&self) -> Mode {
        Mode::Naive
    }
    fn retrieve(&self, query: &Query, stores: &Stores, p: Providers<'_>) -> Result<RetrievedContext> {
        naive_search(query, stores.index()?, &self.0, p.embedder)
    }
}

impl Retriever for LocalRetriever {
    fn mode(&self) -> Mode {
        Mode::Local
    }
    fn retrieve(&self, query: &Query, stores: &Stores, p: Providers<'_>) -> Result<RetrievedContext> {
        local_search(query, stores.graph()?, stores.index()?, &self.0, p.embedder)
    }
}

impl Retriever for GlobalRetriever {
    fn mode(&self) -> Mode {
        Mode::Global
    }
    fn retrieve(&self, query: &Query, stores: &Stores, p: Providers<'_>) -> Result<RetrievedContext> {
        global_search(query, stores.communities()?, &self.0, p.llm, p.embedder)
    }
}

pub type RetrieverRegistry = Registry<RetrievalConfig, dyn Retriever>;

/// Registry with the `naive`, `local` and `global` strategies.
pub fn retriever_registry() -> RetrieverRegistry {
    let mut reg = RetrieverRegistry::new("retrieval mode");
    reg.register("naive", |c: &RetrievalConfig| {
        Ok(Box::new(NaiveRetriever(c.naive.clone())) as Box<dyn Retriever>)
    });
    reg.register("local", |c: &RetrievalConfig| {
        Ok(Box::new(LocalRetriever(c.local.clone())) as Box<dyn Retriever>)
    });
    reg.register("global", |c: &RetrievalConfig| {
        Ok(Box::new(GlobalRetriever(c.global.clone())) as Box<dyn Retriever>)
    });
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Answer {
    pub answer: String,
    pub context: RetrievedContext,
    pub prompt_tokens: usize,
}

/// Retrieves with the named mode, assembles the prompt and asks the LLM
/// once.
pub fn answer_query(
    query: &Query,
    mode: &str,
    stores: &Stores,
    providers: Providers<'_>,
    config: &RetrievalConfig,
) -> Result<Answer> {
    query.validate()?;
    let retriever = retriever_registry().build(mode, config)?;
    let context = retriever.retrieve(query, stores, providers)?;
    let prompt = assemble_prompt(&context, query, &config.template)?;
    let req = LlmRequest {
        system: String::new(),
        prompt: prompt.text,
        max_tokens: config.answer_max_tokens,
        temperature: config.answer_temperature,
    };
    let answer = providers.llm.complete(&req)?.trim().to_string();
    Ok(Answer {
        answer,
        context,
        prompt_tokens: prompt.tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, score: f64, tokens: usize) -> ContextItem {
        ContextItem {
            kind: ItemKind::Chunk,
            text: String::new(),
            score,
            source_id: id.into(),
            tokens,
        }
    }

    #[test]
    fn packing_skips_overflow_and_continues() {
        let ranked = vec![item("a", 0.9, 6), item("b", 0.8, 5), item("c", 0.7, 4)];
        let (kept, total, dropped) = pack(ranked, 10);
        let ids: Vec<&str> = kept.iter().map(|i| i.source_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!((total, dropped), (10, 1));
    }

    #[test]
    fn ties_break_by_source_id() {
        let out = top_k(vec![item("b", 0.5, 1), item("a", 0.5, 1), item("c", 0.6, 1)], 2);
        let ids: Vec<&str> = out.iter().map(|i| i.source_id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
    }

    #[test]
    fn search_text_puts_history_first() {
        let q = Query::new("now?").with_history(vec!["before".into()]);
        assert_eq!(q.search_text(), "before\nnow?");
        assert!(Query::new("  ").validate().is_err());
    }

    #[test]
    fn modes_parse() {
        assert_eq!("global".parse::<Mode>().unwrap(), Mode::Global);
        assert!(matches!("hybrid".parse::<Mode>(), Err(Error::Config(_))));
        let reg = retriever_registry();
        for m in Mode::ALL {
            assert_eq!(reg.build(m.as_str(), &RetrievalConfig::default()).unwrap().mode(), m);
        }
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        let mut c = RetrievalConfig::default();
        c.global.top_k_reports = 0;
        assert!(c.validate().is_err());
        let mut c = RetrievalConfig::default();
        c.template = "fancy".into();
        assert!(c.validate().is_err());
    }
}
