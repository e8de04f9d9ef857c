//! Knowledge-graph construction and hierarchical community reports.

mod build;
mod community;
mod extract;
pub mod leiden;
mod merge;
mod summarize;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use build::{build_graph, condense_descriptions, BuildOptions, GraphBuild};
pub use community::{detect_communities, partition_at_level};
pub use extract::{extract_elements, parse_records, Extraction, EXTRACTION_SYSTEM};
pub use merge::merge_graphs;
pub use summarize::{
    community_prompt, ranker_registry, summarize_community, CommunityRanker, DensityRanker,
    RankerRegistry, SizeRanker, SUMMARY_SYSTEM,
};

use crate::embeddings::Embedding;

/// Entity id: lowercase with whitespace runs collapsed to one space.
pub fn normalize_id(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub description: String,
    pub source_chunk_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl Entity {
    pub fn new(name: &str, entity_type: &str, description: &str, chunk_id: &str) -> Self {
        Self {
            id: normalize_id(name),
            name: name.trim().to_string(),
            entity_type: entity_type.trim().to_string(),
            description: description.trim().to_string(),
            source_chunk_ids: BTreeSet::from([chunk_id.to_string()]),
            embedding: None,
        }
    }

    /// Text embedded for similarity search.
    pub fn search_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }
}

/// Undirected relation; endpoints are stored with `src < dst`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub src: String,
    pub dst: String,
    pub description: String,
    pub weight: u32,
    pub source_chunk_ids: BTreeSet<String>,
}

impl Relation {
    /// Builds a relation between two entity ids, ordering the endpoints.
    /// Returns `None` for self-loops.
    pub fn new(a: &str, b: &str, description: &str, chunk_id: &str) -> Option<Self> {
        let (src, dst) = match a.cmp(b) {
            std::cmp::Ordering::Less => (a, b),
            std::cmp::Ordering::Greater => (b, a),
            std::cmp::Ordering::Equal => return None,
        };
        Some(Self {
            src: src.to_string(),
            dst: dst.to_string(),
            description: description.trim().to_string(),
            weight: 1,
            source_chunk_ids: BTreeSet::from([chunk_id.to_string()]),
        })
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.src, &self.dst)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub entities: BTreeMap<String, Entity>,
    /// Sorted by `(src, dst)`, unique.
    pub relations: Vec<Relation>,
}

impl KnowledgeGraph {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.len()
    }

    /// Checks endpoint existence, endpoint order and pair uniqueness.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if r.src >= r.dst {
                return Err(format!("relation {}-{} is not ordered", r.src, r.dst));
            }
            if !self.entities.contains_key(&r.src) || !self.entities.contains_key(&r.dst) {
                return Err(format!("relation {}-{} has a missing endpoint", r.src, r.dst));
            }
            if !seen.insert(r.key()) {
                return Err(format!("duplicate relation {}-{}", r.src, r.dst));
            }
            if r.weight == 0 {
                return Err(format!("relation {}-{} has zero weight", r.src, r.dst));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub community_id: String,
    pub summary_text: String,
    pub embedding: Embedding,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: String,
    pub level: usize,
    pub member_entities: BTreeSet<String>,
    pub internal_relations: Vec<Relation>,
    pub parent: Option<String>,
    pub report: Option<CommunityReport>,
}

impl Community {
    pub fn size(&self) -> usize {
        self.member_entities.len()
    }

    pub fn internal_weight(&self) -> u64 {
        self.internal_relations.iter().map(|r| u64::from(r.weight)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_normalized() {
        assert_eq!(normalize_id("  Ada   LOVELACE\t"), "ada lovelace");
        assert_eq!(Entity::new("Ada", "person", "x", "c1").id, "ada");
    }

    #[test]
    fn relations_are_ordered_and_reject_loops() {
        let r = Relation::new("b", "a", "d", "c").unwrap();
        assert_eq!(r.key(), ("a", "b"));
        assert!(Relation::new("a", "a", "d", "c").is_none());
    }
}
