use super::{ContextItem, ItemKind, Mode, NaiveConfig, Query, RetrievedContext};
use crate::embeddings::{embed_one, EmbeddingProvider};
use crate::error::Result;
use crate::store::ChunkIndex;

/// Exact top-`k` chunks by cosine similarity to the query, packed into the
/// window. Never reads the graph.
pub fn naive_search(
    query: &Query,
    index: &ChunkIndex,
    config: &NaiveConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<RetrievedContext> {
    query.validate()?;
    if index.is_empty() || config.k == 0 {
        return Ok(RetrievedContext::empty(Mode::Naive, config.window_l));
    }
    let q = embed_one(embedder, &query.search_text())?;
    let hits: Vec<ContextItem> = index
        .ranked(q.as_slice(), config.k)?
        .into_iter()
        .map(|(c, s)| ContextItem::new(ItemKind::Chunk, &c.id, &c.text, s))
        .collect();
    let k = hits.len();
    Ok(RetrievedContext::from_candidates(Mode::Naive, hits, k, config.window_l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::Chunk;
    use crate::embeddings::{StubEmbedder, TableEmbedder};

    fn index(texts: &[&str], e: &StubEmbedder) -> ChunkIndex {
        ChunkIndex::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Chunk {
                    id: format!("c{i}"),
                    doc_id: "d".into(),
                    text: t.to_string(),
                    token_count: crate::text::count_tokens(t),
                    sentence_range: [i, i],
                    embedding: e.embed(t),
                    sub_index: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_match_ranks_first() {
        let e = StubEmbedder::new(4, 16);
        let idx = index(&["alpha beta", "gamma", "delta epsilon"], &e);
        let ctx = naive_search(&Query::new("gamma"), &idx, &NaiveConfig { k: 2, window_l: 100 }, &e).unwrap();
        assert_eq!(ctx.items[0].source_id, "c1");
        assert!((ctx.items[0].score - 1.0).abs() < 1e-6);
        assert_eq!(ctx.items.len(), 2);
    }

    #[test]
    fn k_zero_and_empty_index() {
        let e = StubEmbedder::new(4, 16);
        let idx = index(&["a"], &e);
        let cfg = NaiveConfig { k: 0, window_l: 10 };
        assert!(naive_search(&Query::new("a"), &idx, &cfg, &e).unwrap().is_empty());
        let empty = ChunkIndex::new(vec![]).unwrap();
        assert!(naive_search(&Query::new("a"), &empty, &NaiveConfig::default(), &e)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn window_drops_long_items() {
        let e = TableEmbedder::new(2)
            .with("q", vec![1.0, 0.0])
            .with("one two three four", vec![1.0, 0.1])
            .with("five", vec![1.0, 0.5]);
        let chunks = ["one two three four", "five"]
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk {
                id: format!("c{i}"),
                doc_id: "d".into(),
                text: t.to_string(),
                token_count: crate::text::count_tokens(t),
                sentence_range: [i, i],
                embedding: e.get(t),
                sub_index: None,
            })
            .collect();
        let idx = ChunkIndex::new(chunks).unwrap();
        let ctx = naive_search(&Query::new("q"), &idx, &NaiveConfig { k: 2, window_l: 3 }, &e).unwrap();
        assert_eq!(ctx.items.len(), 1);
        assert_eq!(ctx.items[0].source_id, "c1");
        assert_eq!(ctx.meta.dropped_for_budget, 1);
        assert!(ctx.total_tokens <= 3);
    }
}
