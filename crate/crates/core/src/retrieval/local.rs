use super::{ChunkLink, ContextItem, ItemKind, LocalSearchConfig, Mode, Query, RetrievedContext};
use crate::embeddings::{cosine_similarity, embed_one, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::kgraph::{Entity, KnowledgeGraph};
use crate::store::ChunkIndex;

/// Entities whose similarity to the query exceeds `tau_e`, plus chunks
/// linked to at least one of those entities, pooled and ranked by
/// similarity to the query. The top `k` are packed into the window.
pub fn local_search(
    query: &Query,
    graph: &KnowledgeGraph,
    index: &ChunkIndex,
    config: &LocalSearchConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<RetrievedContext> {
    query.validate()?;
    if graph.is_empty() || config.k == 0 {
        return Ok(RetrievedContext::empty(Mode::Local, config.window_l));
    }
    let q = embed_one(embedder, &query.search_text())?;

    let mut selected: Vec<(&Entity, &[f32])> = Vec::new();
    let mut candidates = Vec::new();
    for e in graph.entities.values() {
        let v = e
            .embedding
            .as_ref()
            .ok_or_else(|| Error::Config(format!("entity '{}' has no embedding", e.id)))?;
        let s = cosine_similarity(q.as_slice(), v.as_slice())?;
        if s > config.tau_e {
            selected.push((e, v.as_slice()));
            candidates.push(ContextItem::new(ItemKind::Entity, &e.id, e.search_text(), s));
        }
    }

    for c in &index.chunks {
        let admitted = match config.chunk_link {
            ChunkLink::Linkage => selected.iter().any(|(e, _)| e.source_chunk_ids.contains(&c.id)),
            ChunkLink::Embedding => {
                let mut any = false;
                for (_, v) in &selected {
                    if cosine_similarity(c.embedding.as_slice(), v)? > config.tau_d {
                        any = true;
                        break;
                    }
                }
                any
            }
        };
        if admitted {
            let s = cosine_similarity(q.as_slice(), c.embedding.as_slice())?;
            candidates.push(ContextItem::new(ItemKind::Chunk, &c.id, &c.text, s));
        }
    }

    Ok(RetrievedContext::from_candidates(
        Mode::Local,
        candidates,
        config.k,
        config.window_l,
    ))
}
