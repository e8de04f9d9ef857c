use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use semrag::chunker::{chunk_corpus, Document};
use semrag::config::RunConfig;
use semrag::embeddings::{build_embedder, EmbeddingProvider};
use semrag::evalkit::{buffer_sweep, fixed3, load_qa, run_eval, SweepConfig};
use semrag::kgraph::build_graph;
use semrag::llm::{build_llm, LlmClient};
use semrag::retrieval::{answer_query, Mode, Providers, Query, Stores};
use semrag::store::{
    file_hash, load_communities, load_documents, load_graph, load_index, read_jsonl_numbered, save_communities,
    save_documents, save_graph, save_index, write_atomic, ChunkIndex, Manifest, StageRecord, CHUNKS, COMMUNITIES,
    DOCUMENTS, ENTITIES, RELATIONS,
};

use crate::artifacts::{require_fresh, CliError};

type Out<'a> = &'a mut dyn Write;

fn say(out: Out<'_>, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

struct Models {
    llm: Box<dyn LlmClient>,
    embedder: Box<dyn EmbeddingProvider>,
}

impl Models {
    fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Self {
            llm: build_llm(&cfg.llm)?,
            embedder: build_embedder(&cfg.embedding)?,
        })
    }

    fn providers(&self) -> Providers<'_> {
        Providers {
            llm: self.llm.as_ref(),
            embedder: self.embedder.as_ref(),
        }
    }
}

fn record(cfg: &RunConfig, models: Option<&Models>) -> StageRecord {
    let mut r = StageRecord {
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.seed,
        ..Default::default()
    };
    if let Some(m) = models {
        r.providers.insert("embedding".into(), m.embedder.identity());
        r.providers.insert("llm".into(), m.llm.identity());
    }
    r
}

fn finish(dir: &Path, mut manifest: Manifest, stage: &str, mut rec: StageRecord) -> Result<(), CliError> {
    rec.stamp();
    manifest.stages.insert(stage.to_string(), rec);
    manifest.save(dir)?;
    Ok(())
}

fn normalized(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Reads and validates a corpus; returns the documents and how many were
/// dropped as duplicates.
pub fn read_corpus(path: &Path, merge_duplicates: bool) -> Result<(Vec<Document>, usize), CliError> {
    let rows = read_jsonl_numbered::<Document>(path)?;
    let bad = |line: usize, message: String| CliError::Input {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut seen_text: HashMap<String, String> = HashMap::new();
    let mut docs = Vec::new();
    let mut merged = 0;
    for (line, doc) in rows {
        if doc.id.trim().is_empty() {
            return Err(bad(line, "document id must be non-empty".into()));
        }
        if doc.text.trim().is_empty() {
            return Err(bad(line, format!("document '{}' has empty text", doc.id)));
        }
        if let Some(first) = seen_ids.insert(doc.id.clone(), line) {
            return Err(bad(line, format!("duplicate document id '{}' (first on line {first})", doc.id)));
        }
        if merge_duplicates {
            let key = normalized(&doc.text);
            if seen_text.contains_key(&key) {
                merged += 1;
                continue;
            }
            seen_text.insert(key, doc.id.clone());
        }
        docs.push(doc);
    }
    Ok((docs, merged))
}

pub fn ingest(corpus: &Path, out_dir: &Path, cfg: &RunConfig, out: Out<'_>) -> Result<(), CliError> {
    let (docs, merged) = read_corpus(corpus, cfg.ingest.merge_duplicates)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let manifest = Manifest::load_or_default(out_dir)?;
    save_documents(&out_dir.join(DOCUMENTS), &docs)?;

    let mut rec = record(cfg, None);
    rec.inputs.insert("corpus".into(), file_hash(corpus)?);
    rec.hash_outputs(out_dir, &[DOCUMENTS])?;
    rec.counts.insert("documents".into(), docs.len() as u64);
    rec.counts.insert("merged".into(), merged as u64);
    finish(out_dir, manifest, "ingest", rec)?;
    say(out, format!("ingested {} documents ({merged} merged) into {}", docs.len(), out_dir.display()))
}

pub fn chunk(dir: &Path, cfg: &RunConfig, force: bool, out: Out<'_>) -> Result<(), CliError> {
    let manifest = Manifest::load_or_default(dir)?;
    require_fresh(dir, &manifest, DOCUMENTS, force)?;
    let docs = load_documents(&dir.join(DOCUMENTS))?;
    let models = Models::build(cfg)?;
    let chunks = chunk_corpus(&docs, &cfg.chunking, models.embedder.as_ref(), cfg.embedding.batching())?;
    let index = ChunkIndex::with_dim(chunks, models.embedder.dim())?;
    save_index(&dir.join(CHUNKS), &index)?;

    let mut rec = record(cfg, Some(&models));
    rec.hash_inputs(dir, &[DOCUMENTS])?;
    rec.hash_outputs(dir, &[CHUNKS])?;
    rec.counts.insert("documents".into(), docs.len() as u64);
    rec.counts.insert("chunks".into(), index.len() as u64);
    rec.counts.insert("buffer".into(), cfg.chunking.buffer_size as u64);
    finish(dir, manifest, "chunk", rec)?;
    say(
        out,
        format!("{} chunks from {} documents (buffer {})", index.len(), docs.len(), cfg.chunking.buffer_size),
    )
}

fn load_checked_index(dir: &Path) -> Result<ChunkIndex, CliError> {
    let loaded = load_index(&dir.join(CHUNKS))?;
    if let Some(w) = loaded.integrity_warning {
        eprintln!("warning: {w}");
    }
    Ok(loaded.index)
}

pub fn graph(dir: &Path, cfg: &RunConfig, force: bool, out: Out<'_>) -> Result<(), CliError> {
    let manifest = Manifest::load_or_default(dir)?;
    require_fresh(dir, &manifest, CHUNKS, force)?;
    let index = load_checked_index(dir)?;
    let models = Models::build(cfg)?;
    let build = build_graph(
        &index.chunks,
        models.llm.as_ref(),
        models.embedder.as_ref(),
        cfg.embedding.batching(),
        &cfg.build_options(),
    )?;
    for f in &build.chunk_failures {
        eprintln!("warning: {f}");
    }
    save_graph(dir, &build.graph)?;
    save_communities(&dir.join(COMMUNITIES), &build.communities)?;

    let mut rec = record(cfg, Some(&models));
    rec.hash_inputs(dir, &[CHUNKS])?;
    rec.hash_outputs(dir, &[ENTITIES, RELATIONS, COMMUNITIES])?;
    let counts = [
        ("nodes", build.graph.node_count()),
        ("edges", build.graph.edge_count()),
        ("communities", build.communities.len()),
        ("chunk_failures", build.chunk_failures.len()),
        ("skipped_records", build.skipped_records),
        ("condensed", build.condensed),
    ];
    rec.counts.extend(counts.map(|(k, v)| (k.to_string(), v as u64)));
    finish(dir, manifest, "graph", rec)?;
    say(
        out,
        format!(
            "{} nodes, {} edges, {} communities ({} chunk extractions failed)",
            build.graph.node_count(),
            build.graph.edge_count(),
            build.communities.len(),
            build.chunk_failures.len()
        ),
    )
}

/// Artifacts each retrieval mode reads.
pub fn mode_artifacts(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Naive => &[CHUNKS],
        Mode::Local => &[CHUNKS, ENTITIES, RELATIONS],
        Mode::Global => &[COMMUNITIES],
    }
}

fn load_stores(dir: &Path, manifest: &Manifest, mode: Mode, force: bool) -> Result<Stores, CliError> {
    let needed = mode_artifacts(mode);
    for a in needed {
        require_fresh(dir, manifest, a, force)?;
    }
    let mut stores = Stores::new();
    if needed.contains(&CHUNKS) {
        stores = stores.with_index(load_checked_index(dir)?);
    }
    if needed.contains(&ENTITIES) {
        stores = stores.with_graph(load_graph(dir)?);
    }
    if needed.contains(&COMMUNITIES) {
        stores = stores.with_communities(load_communities(&dir.join(COMMUNITIES))?);
    }
    Ok(stores)
}

fn warn_provider_drift(manifest: &Manifest, mode: Mode, models: &Models) {
    let stage = if mode == Mode::Naive { "chunk" } else { "graph" };
    let current = models.embedder.identity();
    if let Some(recorded) = manifest.stages.get(stage).and_then(|s| s.providers.get("embedding")) {
        if *recorded != current {
            eprintln!("warning: `{stage}` ran with embedder {recorded}, now using {current}");
        }
    }
}

pub fn query(
    dir: &Path,
    question: &str,
    cfg: &RunConfig,
    force: bool,
    show_context: bool,
    out: Out<'_>,
) -> Result<(), CliError> {
    let manifest = Manifest::load_or_default(dir)?;
    let stores = load_stores(dir, &manifest, cfg.mode, force)?;
    let models = Models::build(cfg)?;
    warn_provider_drift(&manifest, cfg.mode, &models);
    let a = answer_query(&Query::new(question), cfg.mode.as_str(), &stores, models.providers(), &cfg.retrieval)?;
    say(out, &a.answer)?;
    if show_context {
        let ctx = &a.context;
        say(
            out,
            format!(
                "\n--- context: {} mode, {} items, {}/{} tokens, {} candidates, {} dropped for budget ---",
                ctx.mode,
                ctx.items.len(),
                ctx.total_tokens,
                ctx.window_l,
                ctx.meta.candidates,
                ctx.meta.dropped_for_budget
            ),
        )?;
        for (i, item) in ctx.items.iter().enumerate() {
            say(
                out,
                format!(
                    "{:>2}. [{}] score={} tokens={} {:?}\n    {}",
                    i + 1,
                    item.source_id,
                    fixed3(Some(item.score)),
                    item.tokens,
                    item.kind,
                    item.text.replace('\n', " ")
                ),
            )?;
        }
    }
    Ok(())
}

pub fn eval(dir: &Path, qa_path: &Path, cfg: &RunConfig, force: bool, out: Out<'_>) -> Result<(), CliError> {
    let manifest = Manifest::load_or_default(dir)?;
    let stores = load_stores(dir, &manifest, cfg.mode, force)?;
    let qa = load_qa(qa_path)?;
    let models = Models::build(cfg)?;
    warn_provider_drift(&manifest, cfg.mode, &models);
    let report = run_eval(&qa, cfg.mode.as_str(), &stores, models.providers(), &cfg.retrieval, &cfg.eval)?;
    for f in &report.failed {
        eprintln!("warning: example {} failed: {}", f.index, f.error);
    }
    let json_name = format!("eval_{}.json", cfg.mode);
    let csv_name = format!("eval_{}.csv", cfg.mode);
    write_atomic(&dir.join(&json_name), report.to_json().as_bytes())?;
    write_atomic(&dir.join(&csv_name), report.to_csv().as_bytes())?;

    let mut rec = record(cfg, Some(&models));
    rec.inputs.insert("qa".into(), file_hash(qa_path)?);
    rec.hash_inputs(dir, mode_artifacts(cfg.mode))?;
    rec.hash_outputs(dir, &[&json_name, &csv_name])?;
    rec.counts.insert("examples".into(), report.examples as u64);
    rec.counts.insert("failures".into(), report.failures as u64);
    finish(dir, manifest, &format!("eval:{}", cfg.mode), rec)?;

    let s = &report.summary;
    let fmt = |st: Option<semrag::evalkit::Stat>| match st {
        Some(st) => format!("{}±{}", fixed3(Some(st.mean)), fixed3(Some(st.std))),
        None => "n/a".into(),
    };
    say(
        out,
        format!(
            "{} mode, {}/{} examples: correctness {}, similarity {}, relevancy {} -> {}",
            cfg.mode,
            report.examples - report.failures,
            report.examples,
            fmt(s.correctness),
            fmt(s.similarity),
            fmt(s.relevancy),
            dir.join(&json_name).display()
        ),
    )
}

pub fn sweep(dir: &Path, qa_path: &Path, cfg: &RunConfig, force: bool, out: Out<'_>) -> Result<(), CliError> {
    let manifest = Manifest::load_or_default(dir)?;
    require_fresh(dir, &manifest, DOCUMENTS, force)?;
    let docs = load_documents(&dir.join(DOCUMENTS))?;
    let qa = load_qa(qa_path)?;
    let models = Models::build(cfg)?;
    let config = SweepConfig {
        chunking: cfg.chunking.clone(),
        build: cfg.build_options(),
        retrieval: cfg.retrieval.clone(),
        eval: cfg.eval.clone(),
        mode: cfg.mode,
        timing: cfg.sweep_timing(),
        batching: cfg.embedding.batching(),
    };
    let report = buffer_sweep(&docs, &qa, &cfg.sweep.buffers, &config, models.providers())?;
    for row in &report.rows {
        if let Some(e) = &row.error {
            eprintln!("warning: buffer {} failed: {e}", row.buffer);
        }
    }
    write_atomic(&dir.join("sweep.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("sweep.json"), report.to_json().as_bytes())?;

    let mut rec = record(cfg, Some(&models));
    rec.inputs.insert("qa".into(), file_hash(qa_path)?);
    rec.hash_inputs(dir, &[DOCUMENTS])?;
    rec.hash_outputs(dir, &["sweep.csv", "sweep.json"])?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    rec.counts = BTreeMap::from([
        ("rows".to_string(), report.rows.len() as u64),
        ("failed_rows".to_string(), failed as u64),
    ]);
    finish(dir, manifest, "sweep", rec)?;
    say(out, report.to_csv().trim_end())
}
