//! Command-line front end: `ingest -> chunk -> graph -> query | eval | sweep`.
//!
//! Every command reads one TOML [`RunConfig`] (from `--config`, else the
//! `SEMRAG_CONFIG` environment variable, else built-in defaults), applies
//! flag overrides, validates, and records what it consumed and produced in
//! the run directory's `manifest.json`.

mod artifacts;
mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use semrag::config::RunConfig;
use semrag::retrieval::Mode;

pub use artifacts::{require_fresh, CliError};

/// Environment variable consulted when `--config` is absent.
pub const CONFIG_ENV: &str = "SEMRAG_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "semrag", version, about = "Semantic chunking + knowledge-graph retrieval pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL corpus and write documents.jsonl into OUT_DIR.
    Ingest { corpus: PathBuf, out_dir: PathBuf },
    /// Semantic-chunk the ingested documents into chunks.jsonl.
    Chunk { run_dir: PathBuf },
    /// Extract the knowledge graph and write community reports.
    Graph { run_dir: PathBuf },
    /// Answer one question.
    Query { run_dir: PathBuf, question: String },
    /// Score every QA pair and write eval_{mode}.json / eval_{mode}.csv.
    Eval { run_dir: PathBuf, qa: PathBuf },
    /// Rebuild chunks and graph per buffer size and write sweep.csv / sweep.json.
    Sweep { run_dir: PathBuf, qa: PathBuf },
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "naive|local|global")]
    pub mode: Option<Mode>,
    /// Chunking buffer size.
    #[arg(long, global = true, value_name = "N")]
    pub buffer: Option<usize>,
    /// Buffer sizes for `sweep`, comma separated.
    #[arg(long, global = true, value_name = "CSV", value_delimiter = ',')]
    pub buffers: Option<Vec<usize>>,
    /// Items kept by naive and local search.
    #[arg(long, global = true, value_name = "N")]
    pub k: Option<usize>,
    /// Community reports expanded by global search.
    #[arg(long = "top-k-reports", global = true, value_name = "N")]
    pub top_k_reports: Option<usize>,
    /// Entity similarity threshold for local search.
    #[arg(long = "tau-e", global = true, value_name = "F", allow_negative_numbers = true)]
    pub tau_e: Option<f64>,
    /// Chunk similarity threshold for local search.
    #[arg(long = "tau-d", global = true, value_name = "F", allow_negative_numbers = true)]
    pub tau_d: Option<f64>,
    /// Context window in tokens, for every mode.
    #[arg(long = "window-l", global = true, value_name = "N")]
    pub window_l: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Use the scripted stub LLM with rules from PATH.
    #[arg(long = "stub-llm", global = true, value_name = "PATH")]
    pub stub_llm: Option<PathBuf>,
    /// Use the deterministic stub embedder.
    #[arg(long = "stub-embed", global = true)]
    pub stub_embed: bool,
    /// Print the ranked retrieval context after the answer.
    #[arg(long = "show-context", global = true)]
    pub show_context: bool,
    /// Run even when upstream artifacts are stale.
    #[arg(long, global = true)]
    pub force: bool,
}

impl Overrides {
    /// Loads the configuration file (or defaults), then applies the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => RunConfig::load(&p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(b) = self.buffer {
            cfg.chunking.buffer_size = b;
        }
        if let Some(bs) = &self.buffers {
            cfg.sweep.buffers = bs.clone();
        }
        if let Some(k) = self.k {
            cfg.retrieval.naive.k = k;
            cfg.retrieval.local.k = k;
        }
        if let Some(k) = self.top_k_reports {
            cfg.retrieval.global.top_k_reports = k;
        }
        if let Some(t) = self.tau_e {
            cfg.retrieval.local.tau_e = t;
        }
        if let Some(t) = self.tau_d {
            cfg.retrieval.local.tau_d = t;
        }
        if let Some(l) = self.window_l {
            cfg.retrieval.naive.window_l = l;
            cfg.retrieval.local.window_l = l;
            cfg.retrieval.global.window_l = l;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.stub_llm {
            cfg.use_stub_llm(p.clone());
        }
        if self.stub_embed {
            cfg.use_stub_embedder();
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    let o = &cli.overrides;
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Ingest { corpus, out_dir } => commands::ingest(corpus, out_dir, &cfg, &mut out),
        Command::Chunk { run_dir } => commands::chunk(run_dir, &cfg, o.force, &mut out),
        Command::Graph { run_dir } => commands::graph(run_dir, &cfg, o.force, &mut out),
        Command::Query { run_dir, question } => {
            commands::query(run_dir, question, &cfg, o.force, o.show_context, &mut out)
        }
        Command::Eval { run_dir, qa } => commands::eval(run_dir, qa, &cfg, o.force, &mut out),
        Command::Sweep { run_dir, qa } => commands::sweep(run_dir, qa, &cfg, o.force, &mut out),
    }
}
