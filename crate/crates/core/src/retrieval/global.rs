use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ContextItem, GlobalSearchConfig, ItemKind, Mode, Query, RetrievedContext, ScoreMode};
use crate::embeddings::{cosine_similarity, embed_one, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::kgraph::{Community, CommunityReport};
use crate::llm::{LlmClient, LlmRequest};
use crate::text::split_sentences;

pub const RATING_SYSTEM: &str = "\
You rate how helpful one piece of a report is for answering a question.
Reply with a single integer from 0 (useless) to 100 (answers it fully) and nothing else.";

/// A scored sub-piece of a community report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub report_id: String,
    pub point_index: usize,
    pub text: String,
    pub score: f64,
}

impl ReportPoint {
    pub fn source_id(&self) -> String {
        format!("{}#p{}", self.report_id, self.point_index)
    }
}

/// Splits a report into paragraphs at blank lines, then each paragraph
/// into consecutive runs of `sentences_per_point` sentences.
pub fn split_points(report: &str, sentences_per_point: usize) -> Vec<String> {
    let n = sentences_per_point.max(1);
    let mut out = Vec::new();
    let mut paragraph = String::new();
    let flush = |p: &mut String, out: &mut Vec<String>| {
        let sentences = split_sentences(p);
        for group in sentences.chunks(n) {
            let start = group[0].span.start;
            let end = group[group.len() - 1].span.end;
            out.push(p[start..end].to_string());
        }
        p.clear();
    };
    for line in report.lines() {
        if line.trim().is_empty() {
            flush(&mut paragraph, &mut out);
        } else {
            if !paragraph.is_empty() {
                paragraph.push('\n');
            }
            paragraph.push_str(line.trim());
        }
    }
    flush(&mut paragraph, &mut out);
    out
}

fn rating_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d{1,3})\s*(?:/\s*100)?\s*\.?\s*$").expect("static regex"))
}

/// Parses a 0-100 integer rating into [0, 1].
pub fn parse_rating(reply: &str) -> Option<f64> {
    let caps = rating_pattern().captures(reply)?;
    let v: u32 = caps[1].parse().ok()?;
    (v <= 100).then(|| f64::from(v) / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScore {
    pub score: f64,
    /// The LLM rating was unusable and the embedding score was used.
    pub fallback: bool,
}

fn embedding_score(point: &str, query_vec: &Embedding, embedder: &dyn EmbeddingProvider) -> Result<f64> {
    let p = embed_one(embedder, point)?;
    let s = cosine_similarity(p.as_slice(), query_vec.as_slice())?;
    Ok(((s + 1.0) / 2.0).clamp(0.0, 1.0))
}

fn score_with_vec(
    point: &str,
    query: &Query,
    query_vec: &Embedding,
    mode: ScoreMode,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
) -> Result<PointScore> {
    if mode == ScoreMode::Llm {
        let prompt = format!("QUESTION: {}\n\nPOINT: {point}\n\nRATING:", query.search_text());
        let reply = llm.respond(&LlmRequest::internal(RATING_SYSTEM, prompt))?;
        if let Some(score) = parse_rating(&reply) {
            return Ok(PointScore {
                score,
                fallback: false,
            });
        }
    }
    Ok(PointScore {
        score: embedding_score(point, query_vec, embedder)?,
        fallback: mode == ScoreMode::Llm,
    })
}

/// Relevance of one point to the query, in [0, 1].
pub fn score_point(
    point: &str,
    query: &Query,
    mode: ScoreMode,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
) -> Result<PointScore> {
    let q = embed_one(embedder, &query.search_text())?;
    score_with_vec(point, query, &q, mode, llm, embedder)
}

/// Reports ordered by `w * rank / max_rank + (1 - w) * similarity`,
/// ties by community id.
pub fn rank_reports<'a>(
    reports: &[&'a CommunityReport],
    query_vec: &Embedding,
    rank_weight: f64,
) -> Result<Vec<(&'a CommunityReport, f64)>> {
    let max_rank = reports.iter().map(|r| r.rank).fold(0.0_f64, f64::max);
    let mut scored = reports
        .iter()
        .map(|r| {
            let rank_norm = if max_rank > 0.0 { r.rank / max_rank } else { 0.0 };
            let sim = cosine_similarity(r.embedding.as_slice(), query_vec.as_slice())?;
            Ok((*r, rank_weight * rank_norm + (1.0 - rank_weight) * sim))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.community_id.cmp(&b.0.community_id)));
    Ok(scored)
}

/// Ranks community reports, splits the best `top_k_reports` into points,
/// scores every point and keeps the best `k_points` within the window.
pub fn global_search(
    query: &Query,
    communities: &[Community],
    config: &GlobalSearchConfig,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
) -> Result<RetrievedContext> {
    query.validate()?;
    let mut empty = RetrievedContext::empty(Mode::Global, config.window_l);
    empty.meta.point_scoring = Some(config.scoring);
    let pool: Vec<&Community> = communities
        .iter()
        .filter(|c| config.level.is_none_or(|l| c.level == l))
        .collect();
    if config.k_points == 0 || pool.is_empty() {
        return Ok(empty);
    }
    let reports = pool
        .iter()
        .map(|c| {
            c.report
                .as_ref()
                .ok_or_else(|| Error::Config(format!("community {} has no report", c.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let q = embed_one(embedder, &query.search_text())?;
    let ranked = rank_reports(&reports, &q, config.rank_weight)?;

    let points: Vec<(String, usize, String)> = ranked
        .iter()
        .take(config.top_k_reports)
        .flat_map(|(r, _)| {
            split_points(&r.summary_text, config.point_sentences)
                .into_iter()
                .enumerate()
                .map(|(i, p)| (r.community_id.clone(), i, p))
        })
        .collect();

    let scores = points
        .par_iter()
        .map(|(_, _, text)| score_with_vec(text, query, &q, config.scoring, llm, embedder))
        .collect::<Result<Vec<_>>>()?;

    let fallbacks = scores.iter().filter(|s| s.fallback).count();
    let candidates = points
        .into_iter()
        .zip(&scores)
        .map(|((report_id, point_index, text), s)| {
            let p = ReportPoint {
                report_id,
                point_index,
                text,
                score: s.score,
            };
            ContextItem::new(ItemKind::ReportPoint, p.source_id(), p.text, p.score)
        })
        .collect();
    let mut ctx = RetrievedContext::from_candidates(Mode::Global, candidates, config.k_points, config.window_l);
    ctx.meta.point_scoring = Some(config.scoring);
    ctx.meta.scoring_fallbacks = fallbacks;
    Ok(ctx)
}
