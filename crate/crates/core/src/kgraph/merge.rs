use std::collections::{BTreeMap, BTreeSet};

use super::{Entity, KnowledgeGraph, Relation};

const SEPARATOR: &str = "\n";

/// Orders description fragments by (first source chunk id, text), drops
/// empty and repeated fragments, and joins the rest.
fn join_fragments(mut fragments: Vec<(String, String)>) -> String {
    fragments.sort();
    let mut seen = BTreeSet::new();
    fragments
        .into_iter()
        .filter(|(_, d)| !d.is_empty() && seen.insert(d.clone()))
        .map(|(_, d)| d)
        .collect::<Vec<_>>()
        .join(SEPARATOR)
}

fn first_source(ids: &BTreeSet<String>) -> String {
    ids.iter().next().cloned().unwrap_or_default()
}

/// Unions partial graphs. Entities merge by id, relations by endpoint pair
/// with summed weights. The result does not depend on the order of
/// `partials`. Entities left without any description (placeholders) are
/// described by their name.
pub fn merge_graphs(partials: &[KnowledgeGraph]) -> KnowledgeGraph {
    merge_partials(partials, true)
}

pub(super) fn merge_partials(partials: &[KnowledgeGraph], fill_empty: bool) -> KnowledgeGraph {
    let mut entity_parts: BTreeMap<&str, Vec<&Entity>> = BTreeMap::new();
    let mut relation_parts: BTreeMap<(&str, &str), Vec<&Relation>> = BTreeMap::new();
    for g in partials {
        for e in g.entities.values() {
            entity_parts.entry(&e.id).or_default().push(e);
        }
        for r in &g.relations {
            relation_parts.entry(r.key()).or_default().push(r);
        }
    }

    let entities = entity_parts
        .into_iter()
        .map(|(id, mut parts)| {
            parts.sort_by(|a, b| {
                (first_source(&a.source_chunk_ids), &a.name, &a.description)
                    .cmp(&(first_source(&b.source_chunk_ids), &b.name, &b.description))
            });
            let name = parts[0].name.clone();
            let entity_type = parts
                .iter()
                .map(|e| e.entity_type.as_str())
                .find(|t| !t.is_empty())
                .unwrap_or_default()
                .to_string();
            let mut description = join_fragments(
                parts
                    .iter()
                    .map(|e| (first_source(&e.source_chunk_ids), e.description.clone()))
                    .collect(),
            );
            if fill_empty && description.is_empty() {
                description = name.clone();
            }
            let embedding = match parts.as_slice() {
                [only] => only.embedding.clone(),
                _ => None,
            };
            let entity = Entity {
                id: id.to_string(),
                name,
                entity_type,
                description,
                source_chunk_ids: parts
                    .iter()
                    .flat_map(|e| e.source_chunk_ids.iter().cloned())
                    .collect(),
                embedding,
            };
            (id.to_string(), entity)
        })
        .collect::<BTreeMap<_, _>>();

    let relations = relation_parts
        .into_iter()
        .filter(|((src, dst), _)| entities.contains_key(*src) && entities.contains_key(*dst))
        .map(|((src, dst), parts)| Relation {
            src: src.to_string(),
            dst: dst.to_string(),
            description: join_fragments(
                parts
                    .iter()
                    .map(|r| (first_source(&r.source_chunk_ids), r.description.clone()))
                    .collect(),
            ),
            weight: parts.iter().map(|r| r.weight).sum(),
            source_chunk_ids: parts
                .iter()
                .flat_map(|r| r.source_chunk_ids.iter().cloned())
                .collect(),
        })
        .collect();

    KnowledgeGraph {
        entities,
        relations,
    }
}
