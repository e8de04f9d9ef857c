use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embeddings::{cosine_similarity, embed_texts, Batching, EmbeddingProvider};
use crate::error::Result;
use crate::llm::{LlmClient, LlmRequest};
use crate::text::{normalized_words, split_sentences};

pub const CORRECTNESS_SYSTEM: &str = "\
You compare an answer with a ground truth. Break both into short atomic statements, then classify them:
TP: answer statements supported by the ground truth.
FP: answer statements not supported by the ground truth.
FN: ground-truth statements missing from the answer.
Reply with JSON only, in the form {\"TP\": [...], \"FP\": [...], \"FN\": [...]}.";

pub const RELEVANCY_SYSTEM: &str = "\
You write questions that a given answer would fully respond to.
Write each question on its own line and nothing else.";

/// Weight of the factual F1 in answer correctness.
pub const F1_WEIGHT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub correctness: f64,
    pub similarity: f64,
    pub relevancy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectnessMode {
    /// The LLM decomposes and classifies statements.
    Llm,
    /// Sentences are statements; support is word-multiset containment.
    Lexical,
}

/// Cosine similarity of the two answers' embeddings, floored at 0.
pub fn answer_similarity(generated: &str, truth: &str, embedder: &dyn EmbeddingProvider) -> Result<f64> {
    let v = embed_texts(embedder, &[generated.to_string(), truth.to_string()], Batching::default())?;
    Ok(cosine_similarity(v[0].as_slice(), v[1].as_slice())?.clamp(0.0, 1.0))
}

/// `TP / (TP + (FP + FN) / 2)`; zero when there is nothing to compare.
pub fn factual_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp as f64 + 0.5 * (fp + fn_) as f64;
    if denom == 0.0 {
        0.0
    } else {
        tp as f64 / denom
    }
}

pub fn correctness_score(tp: usize, fp: usize, fn_: usize, similarity: f64) -> f64 {
    F1_WEIGHT * factual_f1(tp, fp, fn_) + (1.0 - F1_WEIGHT) * similarity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn multiset(words: Vec<String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for w in words {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn contained(part: &BTreeMap<String, usize>, whole: &BTreeMap<String, usize>) -> bool {
    part.iter().all(|(w, n)| whole.get(w).is_some_and(|m| m >= n))
}

/// Sentences of `generated` whose words all occur in `truth` are true
/// positives, the rest false positives; sentences of `truth` not covered by
/// `generated` are false negatives.
pub fn lexical_counts(generated: &str, truth: &str) -> StatementCounts {
    let gen_all = multiset(normalized_words(generated));
    let truth_all = multiset(normalized_words(truth));
    let supported = |s: &str, whole: &BTreeMap<String, usize>| contained(&multiset(normalized_words(s)), whole);
    let gen_sentences = split_sentences(generated);
    let tp = gen_sentences.iter().filter(|s| supported(&s.text, &truth_all)).count();
    let fn_ = split_sentences(truth)
        .iter()
        .filter(|s| !supported(&s.text, &gen_all))
        .count();
    StatementCounts {
        tp,
        fp: gen_sentences.len() - tp,
        fn_,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Count {
    List(Vec<serde_json::Value>),
    Number(usize),
}

impl Count {
    fn get(&self) -> usize {
        match self {
            Count::List(v) => v.len(),
            Count::Number(n) => *n,
        }
    }
}

#[derive(Deserialize)]
struct Classification {
    #[serde(alias = "tp")]
    #[serde(rename = "TP")]
    tp: Count,
    #[serde(alias = "fp")]
    #[serde(rename = "FP")]
    fp: Count,
    #[serde(alias = "fn")]
    #[serde(rename = "FN")]
    fn_: Count,
}

/// Reads `{"TP": [...], "FP": [...], "FN": [...]}` (lists or counts) from
/// the outermost braces of `reply`.
pub fn parse_classification(reply: &str) -> Option<StatementCounts> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    let c: Classification = serde_json::from_str(&reply[start..=end]).ok()?;
    Some(StatementCounts {
        tp: c.tp.get(),
        fp: c.fp.get(),
        fn_: c.fn_.get(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correctness {
    pub score: f64,
    pub counts: StatementCounts,
    pub similarity: f64,
    /// The LLM classification was unusable and lexical counting was used.
    pub fallback: bool,
}

pub fn answer_correctness(
    question: &str,
    generated: &str,
    truth: &str,
    mode: CorrectnessMode,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
) -> Result<Correctness> {
    let similarity = answer_similarity(generated, truth, embedder)?;
    let mut fallback = false;
    let counts = match mode {
        CorrectnessMode::Lexical => lexical_counts(generated, truth),
        CorrectnessMode::Llm => {
            let prompt = format!("QUESTION: {question}\n\nANSWER:\n{generated}\n\nGROUND TRUTH:\n{truth}");
            let reply = llm.respond(&LlmRequest::internal(CORRECTNESS_SYSTEM, prompt))?;
            match parse_classification(&reply) {
                Some(c) => c,
                None => {
                    fallback = true;
                    lexical_counts(generated, truth)
                }
            }
        }
    };
    Ok(Correctness {
        score: correctness_score(counts.tp, counts.fp, counts.fn_, similarity),
        counts,
        similarity,
        fallback,
    })
}

fn question_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*•]|Q\d*\s*:)?\s*").expect("static regex"))
}

/// Lines ending in `?`, with list markers removed, at most `n`.
pub fn parse_questions(reply: &str, n: usize) -> Vec<String> {
    reply
        .lines()
        .map(|l| question_prefix().replace(l, "").trim().to_string())
        .filter(|l| l.len() > 1 && l.ends_with('?'))
        .take(n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relevancy {
    pub score: f64,
    pub questions: Vec<String>,
    /// No question could be parsed; the score is 0.
    pub flagged: bool,
}

/// Mean similarity between the question and questions regenerated from
/// the answer, clamped to [0, 1].
pub fn answer_relevancy(
    question: &str,
    generated: &str,
    n: usize,
    llm: &dyn LlmClient,
    embedder: &dyn EmbeddingProvider,
) -> Result<Relevancy> {
    let n = n.max(1);
    let prompt = format!("Write {n} questions for this answer.\n\nANSWER:\n{generated}");
    let reply = llm.respond(&LlmRequest::internal(RELEVANCY_SYSTEM, prompt))?;
    let questions = parse_questions(&reply, n);
    if questions.is_empty() {
        return Ok(Relevancy {
            score: 0.0,
            questions,
            flagged: true,
        });
    }
    let mut texts = vec![question.to_string()];
    texts.extend(questions.iter().cloned());
    let v = embed_texts(embedder, &texts, Batching::default())?;
    let mut sum = 0.0;
    for q in &v[1..] {
        sum += cosine_similarity(v[0].as_slice(), q.as_slice())?;
    }
    Ok(Relevancy {
        score: (sum / questions.len() as f64).clamp(0.0, 1.0),
        questions,
        flagged: false,
    })
}
