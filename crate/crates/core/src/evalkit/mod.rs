//! Answer-quality metrics, batch evaluation and the buffer-size sweep.

mod format;
mod metrics;
mod sweep;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::{fixed3, to_fixed_json};
pub use metrics::{
    answer_correctness, answer_relevancy, answer_similarity, correctness_score, factual_f1,
    lexical_counts, parse_classification, parse_questions, Correctness, CorrectnessMode,
    MetricScores, Relevancy, StatementCounts, CORRECTNESS_SYSTEM, F1_WEIGHT, RELEVANCY_SYSTEM,
};
pub use sweep::{buffer_sweep, SweepConfig, SweepReport, SweepRow, SweepTiming, SWEEP_COLUMNS};

use crate::error::{Error, Result};
use crate::retrieval::{answer_query, Mode, Providers, Query, RetrievalConfig, Stores};
use crate::store::read_jsonl_numbered;

pub const STD_CONVENTION: &str = "sample standard deviation (n - 1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question: String,
    #[serde(rename = "answer")]
    pub ground_truth: String,
    #[serde(default, rename = "meta")]
    pub metadata: serde_json::Value,
}

/// Reads QA pairs from JSON Lines `{"question", "answer", "meta"}`.
pub fn load_qa(path: &Path) -> Result<Vec<QaExample>> {
    read_jsonl_numbered::<QaExample>(path)?
        .into_iter()
        .map(|(line, ex)| {
            if ex.question.trim().is_empty() || ex.ground_truth.trim().is_empty() {
                Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "question and answer must be non-empty".into(),
                })
            } else {
                Ok(ex)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    /// Mean, sample standard deviation (0 for one value), min and max.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Questions regenerated per answer for relevancy.
    pub relevancy_n: usize,
    pub correctness: CorrectnessMode,
    /// Examples evaluated at once.
    pub max_concurrency: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            relevancy_n: 3,
            correctness: CorrectnessMode::Llm,
            max_concurrency: 4,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.relevancy_n < 1 {
            return Err(Error::Config("eval.relevancy_n must be >= 1".into()));
        }
        if self.max_concurrency < 1 {
            return Err(Error::Config("eval.max_concurrency must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub index: usize,
    pub question: String,
    pub answer: String,
    pub scores: MetricScores,
    pub statements: StatementCounts,
    pub context_items: usize,
    pub context_tokens: usize,
    pub correctness_fallback: bool,
    pub relevancy_flagged: bool,
    pub scoring_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub correctness: Option<Stat>,
    pub similarity: Option<Stat>,
    pub relevancy: Option<Stat>,
}

impl MetricSummary {
    pub fn of(results: &[ExampleResult]) -> Self {
        let col = |f: fn(&MetricScores) -> f64| Stat::of(&results.iter().map(|r| f(&r.scores)).collect::<Vec<_>>());
        Self {
            correctness: col(|s| s.correctness),
            similarity: col(|s| s.similarity),
            relevancy: col(|s| s.relevancy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub std_convention: String,
    pub examples: usize,
    pub failures: usize,
    pub summary: MetricSummary,
    pub correctness_fallbacks: usize,
    pub relevancy_flags: usize,
    pub scoring_fallbacks: usize,
    pub results: Vec<ExampleResult>,
    pub failed: Vec<ExampleFailure>,
}

impl EvalReport {
    pub fn from_results(mode: Mode, examples: usize, results: Vec<ExampleResult>, failed: Vec<ExampleFailure>) -> Self {
        Self {
            mode,
            std_convention: STD_CONVENTION.into(),
            examples,
            failures: failed.len(),
            summary: MetricSummary::of(&results),
            correctness_fallbacks: results.iter().filter(|r| r.correctness_fallback).count(),
            relevancy_flags: results.iter().filter(|r| r.relevancy_flagged).count(),
            scoring_fallbacks: results.iter().map(|r| r.scoring_fallbacks).sum(),
            results,
            failed,
        }
    }

    /// Sorted keys, floats at three decimals.
    pub fn to_json(&self) -> String {
        to_fixed_json(self)
    }

    /// One row per example; failed examples have empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,correctness,similarity,relevancy\n");
        let mut rows: Vec<(usize, [Option<f64>; 3])> = self
            .results
            .iter()
            .map(|r| {
                let s = r.scores;
                (r.index, [Some(s.correctness), Some(s.similarity), Some(s.relevancy)])
            })
            .chain(self.failed.iter().map(|f| (f.index, [None; 3])))
            .collect();
        rows.sort_by_key(|r| r.0);
        for (i, [c, s, r]) in rows {
            out.push_str(&format!("{i},{},{},{}\n", fixed3(c), fixed3(s), fixed3(r)));
        }
        out
    }
}

fn evaluate_one(
    index: usize,
    ex: &QaExample,
    mode: &str,
    stores: &Stores,
    providers: Providers<'_>,
    retrieval: &RetrievalConfig,
    options: &EvalOptions,
) -> Result<ExampleResult> {
    let answered = answer_query(&Query::new(&ex.question), mode, stores, providers, retrieval)?;
    let c = answer_correctness(
        &ex.question,
        &answered.answer,
        &ex.ground_truth,
        options.correctness,
        providers.llm,
        providers.embedder,
    )?;
    let r = answer_relevancy(
        &ex.question,
        &answered.answer,
        options.relevancy_n,
        providers.llm,
        providers.embedder,
    )?;
    Ok(ExampleResult {
        index,
        question: ex.question.clone(),
        scores: MetricScores {
            correctness: c.score,
            similarity: c.similarity,
            relevancy: r.score,
        },
        statements: c.counts,
        context_items: answered.context.items.len(),
        context_tokens: answered.context.total_tokens,
        correctness_fallback: c.fallback,
        relevancy_flagged: r.flagged,
        scoring_fallbacks: answered.context.meta.scoring_fallbacks,
        answer: answered.answer,
    })
}

/// Answers every example with `mode` and scores it. Individual failures
/// are recorded and the run continues; the run itself fails only on a bad
/// mode or when every example failed.
pub fn run_eval(
    dataset: &[QaExample],
    mode: &str,
    stores: &Stores,
    providers: Providers<'_>,
    retrieval: &RetrievalConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let parsed_mode: Mode = mode.parse()?;
    options.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_concurrency)
        .build()
        .map_err(|e| Error::Config(format!("cannot start evaluation workers: {e}")))?;
    let outcomes: Vec<Result<ExampleResult>> = pool.install(|| {
        dataset
            .par_iter()
            .enumerate()
            .map(|(i, ex)| evaluate_one(i, ex, mode, stores, providers, retrieval, options))
            .collect()
    });

    let mut results = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                failed.push(ExampleFailure {
                    index,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if results.is_empty() {
        if let Some(e) = first_error {
            return Err(e);
        }
    }
    Ok(EvalReport::from_results(parsed_mode, dataset.len(), results, failed))
}
