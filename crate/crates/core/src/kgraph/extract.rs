use std::sync::OnceLock;

use regex::Regex;

use super::merge::merge_partials;
use super::{normalize_id, Entity, KnowledgeGraph, Relation};
use crate::chunker::Chunk;
use crate::error::{Error, Result};
use crate::llm::{LlmClient, LlmRequest};

pub const EXTRACTION_SYSTEM: &str = "\
You extract a knowledge graph from the text supplied by the user.
Identify every named entity and every relationship between two entities.
Emit one record per line and nothing else, using exactly these forms:
(\"entity\"|NAME|TYPE|DESCRIPTION)
(\"relation\"|SOURCE NAME|TARGET NAME|DESCRIPTION)
TYPE is one word such as person, organization, location, event or concept.
DESCRIPTION is one sentence grounded in the text.";

/// Parsed extraction output for one chunk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub graph: KnowledgeGraph,
    /// Records that looked like records but could not be parsed.
    pub skipped: usize,
}

fn record_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([^()]*)\)").expect("static regex"))
}

fn field(raw: &str) -> &str {
    raw.trim().trim_matches('"').trim()
}

/// Parses delimited entity/relation records out of an LLM reply.
///
/// Parenthesized groups without a `|` are ignored. Groups with a `|` whose
/// kind is unknown, whose field count is wrong, or whose names are empty are
/// skipped and counted. Relation endpoints that were not extracted as
/// entities get placeholder entities with an empty type.
pub fn parse_records(reply: &str, chunk_id: &str) -> Extraction {
    let mut skipped = 0;
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut endpoint_names = Vec::new();
    for cap in record_pattern().captures_iter(reply) {
        let body = &cap[1];
        if !body.contains('|') {
            continue;
        }
        let fields: Vec<&str> = body.split('|').map(field).collect();
        match (fields[0].to_lowercase().as_str(), fields.len()) {
            ("entity", 4) if !normalize_id(fields[1]).is_empty() => {
                entities.push(Entity::new(fields[1], fields[2], fields[3], chunk_id));
            }
            ("relation", 4) => {
                let (a, b) = (normalize_id(fields[1]), normalize_id(fields[2]));
                match Relation::new(&a, &b, fields[3], chunk_id) {
                    Some(r) if !a.is_empty() && !b.is_empty() => {
                        relations.push(r);
                        endpoint_names.push(fields[1].to_string());
                        endpoint_names.push(fields[2].to_string());
                    }
                    _ => skipped += 1,
                }
            }
            _ => skipped += 1,
        }
    }

    for name in endpoint_names {
        let id = normalize_id(&name);
        if !entities.iter().any(|e| e.id == id) {
            entities.push(Entity::new(&name, "", "", chunk_id));
        }
    }

    let partials: Vec<KnowledgeGraph> = entities
        .into_iter()
        .map(|e| KnowledgeGraph {
            entities: [(e.id.clone(), e)].into(),
            relations: Vec::new(),
        })
        .chain(std::iter::once(KnowledgeGraph {
            entities: Default::default(),
            relations,
        }))
        .collect();
    Extraction {
        graph: merge_partials(&partials, false),
        skipped,
    }
}

/// Prompts the LLM with the fixed extraction template and parses the reply.
pub fn extract_elements(chunk: &Chunk, llm: &dyn LlmClient) -> Result<Extraction> {
    let req = LlmRequest::internal(EXTRACTION_SYSTEM, chunk.text.clone());
    let reply = llm.complete(&req).map_err(|source| Error::Extraction {
        chunk_id: chunk.id.clone(),
        source,
    })?;
    Ok(parse_records(&reply, &chunk.id))
}
