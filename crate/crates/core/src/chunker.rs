//! Semantic chunking.
//!
//! A document is split into sentences, each sentence is widened into a
//! buffer group of its `b` neighbours on either side, and the groups are
//! embedded. A chunk boundary is placed between consecutive groups whose
//! cosine distance reaches the threshold. Chunks hold the raw sentences
//! (never the buffered text) and are split into overlapping token windows
//! when they exceed the token limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{cosine_distance, embed_texts, Batching, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::text::{count_tokens, split_sentences, token_spans, Sentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// A sentence widened by its buffer window.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceGroup {
    pub center_index: usize,
    /// Inclusive sentence index range.
    pub member_range: (usize, usize),
    pub text: String,
    pub embedding: Option<Embedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    #[serde(rename = "tokens")]
    pub token_count: usize,
    /// Inclusive, zero-based sentence range within the source document.
    #[serde(rename = "range")]
    pub sentence_range: [usize; 2],
    pub embedding: Embedding,
    /// Position among the overlap windows of one oversized semantic chunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Absolute,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub buffer_size: usize,
    pub threshold_mode: ThresholdMode,
    /// Cosine-distance threshold used in absolute mode, in `[0, 2]`.
    pub tau: f64,
    /// Nearest-rank percentile of the distance list used in percentile mode.
    pub percentile: f64,
    pub token_limit: usize,
    pub overlap: usize,
    /// Number of following groups a group must stay close to in order to
    /// merge; 1 compares consecutive groups only.
    pub neighbors: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            buffer_size: 0,
            threshold_mode: ThresholdMode::Percentile,
            tau: 0.5,
            percentile: 95.0,
            token_limit: 1024,
            overlap: 128,
            neighbors: 1,
        }
    }
}

impl ChunkingConfig {
    pub fn absolute(tau: f64) -> Self {
        Self {
            threshold_mode: ThresholdMode::Absolute,
            tau,
            ..Self::default()
        }
    }

    pub fn percentile(p: f64) -> Self {
        Self {
            threshold_mode: ThresholdMode::Percentile,
            percentile: p,
            ..Self::default()
        }
    }

    pub fn with_buffer(mut self, b: usize) -> Self {
        self.buffer_size = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("chunking.{m}")));
        if self.token_limit == 0 {
            return bad("token_limit must be > 0");
        }
        if self.overlap >= self.token_limit {
            return bad("overlap must be smaller than token_limit");
        }
        if !(0.0..=2.0).contains(&self.tau) {
            return bad("tau must be in [0, 2]");
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return bad("percentile must be in (0, 100)");
        }
        if self.neighbors == 0 {
            return bad("neighbors must be >= 1");
        }
        Ok(())
    }
}

/// One group per sentence spanning `[i - b, i + b]`, clipped to the document.
pub fn buffer_merge(sentences: &[Sentence], b: usize) -> Vec<SentenceGroup> {
    let last = sentences.len().saturating_sub(1);
    (0..sentences.len())
        .map(|i| {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(last);
            let text = sentences[lo..=hi]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            SentenceGroup {
                center_index: i,
                member_range: (lo, hi),
                text,
                embedding: None,
            }
        })
        .collect()
}

/// Nearest-rank percentile (`p` in `(0, 100)`) of `values`.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0 * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Threshold actually applied to `distances` under `config`.
pub fn effective_threshold(distances: &[f64], config: &ChunkingConfig) -> Option<f64> {
    match config.threshold_mode {
        ThresholdMode::Absolute => Some(config.tau),
        ThresholdMode::Percentile => nearest_rank_percentile(distances, config.percentile),
    }
}

/// Flag `i` is true when the gap after group `i` is a chunk boundary.
pub fn compute_breakpoints(distances: &[f64], config: &ChunkingConfig) -> Vec<bool> {
    match effective_threshold(distances, config) {
        Some(t) => distances.iter().map(|&d| d >= t).collect(),
        None => Vec::new(),
    }
}

/// Boundary flags when each group must stay within the threshold of all of
/// its next `n` neighbours to merge. `n = 1` equals [`compute_breakpoints`].
pub fn neighbor_breakpoints(embeddings: &[Embedding], config: &ChunkingConfig) -> Result<Vec<bool>> {
    let consecutive = consecutive_distances(embeddings)?;
    let Some(threshold) = effective_threshold(&consecutive, config) else {
        return Ok(Vec::new());
    };
    let n = config.neighbors.max(1);
    let last = embeddings.len().saturating_sub(1);
    (0..last)
        .map(|i| {
            for k in 1..=n.min(last - i) {
                let d = if k == 1 {
                    consecutive[i]
                } else {
                    cosine_distance(embeddings[i].as_slice(), embeddings[i + k].as_slice())?
                };
                if d >= threshold {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect()
}

fn consecutive_distances(embeddings: &[Embedding]) -> Result<Vec<f64>> {
    embeddings
        .windows(2)
        .map(|w| cosine_distance(w[0].as_slice(), w[1].as_slice()))
        .collect()
}

/// Splits an oversized chunk into token windows of width `token_limit` and
/// stride `token_limit - overlap`. The final window is the remainder, so
/// consecutive windows share exactly `overlap` tokens. Chunks within the
/// limit are returned unchanged.
pub fn split_with_overlap(chunk: &Chunk, token_limit: usize, overlap: usize) -> Vec<Chunk> {
    assert!(overlap < token_limit, "overlap must be smaller than token_limit");
    let spans = token_spans(&chunk.text);
    if spans.len() <= token_limit {
        return vec![chunk.clone()];
    }
    let stride = token_limit - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + token_limit).min(spans.len());
        let text = chunk.text[spans[start].start..spans[end - 1].end].to_string();
        out.push(Chunk {
            id: format!("{}.{}", chunk.id, out.len()),
            doc_id: chunk.doc_id.clone(),
            token_count: end - start,
            text,
            sentence_range: chunk.sentence_range,
            embedding: chunk.embedding.clone(),
            sub_index: Some(out.len()),
        });
        if end == spans.len() {
            break;
        }
        start += stride;
    }
    out
}

/// Inclusive sentence ranges induced by boundary flags over `m` sentences.
pub fn ranges_from_breakpoints(m: usize, flags: &[bool]) -> Vec<(usize, usize)> {
    if m == 0 {
        return Vec::new();
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    for (i, &brk) in flags.iter().enumerate().take(m - 1) {
        if brk {
            ranges.push((start, i));
            start = i + 1;
        }
    }
    ranges.push((start, m - 1));
    ranges
}

/// Chunks one document. Returns an empty list for documents without
/// sentences.
pub fn chunk_document(
    doc: &Document,
    config: &ChunkingConfig,
    embedder: &dyn EmbeddingProvider,
    batching: Batching,
) -> Result<Vec<Chunk>> {
    config.validate()?;
    let sentences = split_sentences(&doc.text);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let groups = buffer_merge(&sentences, config.buffer_size);
    let group_texts: Vec<String> = groups.into_iter().map(|g| g.text).collect();
    let group_vecs = embed_texts(embedder, &group_texts, batching)?;
    let flags = neighbor_breakpoints(&group_vecs, config)?;

    let mut drafts = Vec::new();
    for (k, (lo, hi)) in ranges_from_breakpoints(sentences.len(), &flags)
        .into_iter()
        .enumerate()
    {
        let text = doc.text[sentences[lo].span.start..sentences[hi].span.end].to_string();
        let chunk = Chunk {
            id: format!("{}#{}", doc.id, k),
            doc_id: doc.id.clone(),
            token_count: count_tokens(&text),
            text,
            sentence_range: [lo, hi],
            embedding: Embedding(Vec::new()),
            sub_index: None,
        };
        drafts.extend(split_with_overlap(&chunk, config.token_limit, config.overlap));
    }

    let texts: Vec<String> = drafts.iter().map(|c| c.text.clone()).collect();
    let vecs = embed_texts(embedder, &texts, batching)?;
    for (chunk, v) in drafts.iter_mut().zip(vecs) {
        chunk.embedding = v;
    }
    Ok(drafts)
}

/// Chunks every document, in parallel across documents, preserving order.
pub fn chunk_corpus(
    docs: &[Document],
    config: &ChunkingConfig,
    embedder: &dyn EmbeddingProvider,
    batching: Batching,
) -> Result<Vec<Chunk>> {
    let per_doc: Vec<Vec<Chunk>> = docs
        .par_iter()
        .map(|d| chunk_document(d, config, embedder, batching))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}
