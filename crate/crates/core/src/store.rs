//! On-disk artifacts and the exact-search chunk index.
//!
//! Every artifact is JSON or JSON Lines. Files are written through a
//! temporary sibling and renamed into place, so a reader never sees a
//! half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chunker::{Chunk, Document};
use crate::embeddings::cosine_similarity;
use crate::error::{Error, Result};
use crate::kgraph::{Community, Entity, KnowledgeGraph, Relation};

pub const DOCUMENTS: &str = "documents.jsonl";
pub const CHUNKS: &str = "chunks.jsonl";
pub const ENTITIES: &str = "entities.jsonl";
pub const RELATIONS: &str = "relations.jsonl";
pub const COMMUNITIES: &str = "communities.json";
pub const MANIFEST: &str = "manifest.json";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_line<T: Serialize>(item: &T) -> String {
    serde_json::to_string(item).expect("artifact types serialize")
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_line(item));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message: e.to_string(),
    })
}

/// Reads one JSON value per non-blank line. Errors carry 1-based line
/// numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_jsonl_numbered(path)?.into_iter().map(|(_, v)| v).collect())
}

/// Like [`read_jsonl`], pairing each value with its line number.
pub fn read_jsonl_numbered<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Ok((i + 1, parse_line(path, i + 1, l)?)))
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Hash over every chunk id and text, in order.
pub fn content_hash(chunks: &[Chunk]) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        for part in [&c.id, &c.text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
    }
    hex(&h.finalize())
}

/// Chunks with a flat, exact cosine-similarity index.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex {
    pub chunks: Vec<Chunk>,
    pub dim: usize,
    pub content_hash: String,
}

impl ChunkIndex {
    /// Builds an index, taking the dimension from the first chunk.
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        let dim = chunks.first().map_or(0, |c| c.embedding.dim());
        Self::with_dim(chunks, dim)
    }

    pub fn with_dim(chunks: Vec<Chunk>, dim: usize) -> Result<Self> {
        if let Some(c) = chunks.iter().find(|c| c.embedding.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.embedding.dim(),
            });
        }
        Ok(Self {
            content_hash: content_hash(&chunks),
            chunks,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.id == id)
    }

    /// Exact top-`k` chunks by cosine similarity, ties broken by id. Asking
    /// for more than the index holds returns everything.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<(String, f64)>> {
        Ok(self
            .ranked(query, k)?
            .into_iter()
            .map(|(c, s)| (c.id.clone(), s))
            .collect())
    }

    /// Like [`knn`](Self::knn) but borrowing the chunks.
    pub fn ranked(&self, query: &[f32], k: usize) -> Result<Vec<(&Chunk, f64)>> {
        if self.chunks.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut scored = self
            .chunks
            .iter()
            .map(|c| Ok((c, cosine_similarity(query, c.embedding.as_slice())?)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        scored.truncate(k);
        Ok(scored)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexHeader {
    dim: usize,
    count: usize,
    content_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedIndex {
    pub index: ChunkIndex,
    /// Set when the stored hash does not match the loaded chunks.
    pub integrity_warning: Option<String>,
}

/// Writes a header line (`dim`, `count`, `content_hash`) followed by one
/// chunk per line. Embedding components are written in shortest
/// round-trip decimal form.
pub fn save_index(path: &Path, index: &ChunkIndex) -> Result<()> {
    let header = IndexHeader {
        dim: index.dim,
        count: index.chunks.len(),
        content_hash: index.content_hash.clone(),
    };
    let mut out = to_line(&header);
    out.push('\n');
    for c in &index.chunks {
        out.push_str(&to_line(c));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_index(path: &Path) -> Result<LoadedIndex> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty index file".into()))?;
    let header: IndexHeader = parse_line(path, 1, first)?;
    let mut chunks = Vec::with_capacity(header.count);
    let mut last_line = 1;
    for (i, line) in lines {
        let c: Chunk = parse_line(path, i + 1, line)?;
        if c.embedding.dim() != header.dim {
            return Err(parse_err(
                i + 1,
                format!("embedding has {} dimensions, header declares {}", c.embedding.dim(), header.dim),
            ));
        }
        chunks.push(c);
        last_line = i + 1;
    }
    if chunks.len() != header.count {
        return Err(parse_err(
            last_line + 1,
            format!("expected {} chunks, found {} (truncated file?)", header.count, chunks.len()),
        ));
    }
    let index = ChunkIndex::with_dim(chunks, header.dim)?;
    let integrity_warning = (index.content_hash != header.content_hash).then(|| {
        format!(
            "{}: content hash mismatch (stored {}, computed {}); the file was edited after it was written",
            path.display(),
            header.content_hash,
            index.content_hash
        )
    });
    Ok(LoadedIndex {
        index,
        integrity_warning,
    })
}

pub fn save_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    read_jsonl(path)
}

/// Writes `entities.jsonl` and `relations.jsonl` into `dir`.
pub fn save_graph(dir: &Path, graph: &KnowledgeGraph) -> Result<()> {
    write_jsonl(&dir.join(ENTITIES), graph.entities.values())?;
    write_jsonl(&dir.join(RELATIONS), &graph.relations)
}

pub fn load_graph(dir: &Path) -> Result<KnowledgeGraph> {
    let entities: Vec<Entity> = read_jsonl(&dir.join(ENTITIES))?;
    let mut relations: Vec<Relation> = read_jsonl(&dir.join(RELATIONS))?;
    relations.sort_by(|a, b| a.key().cmp(&b.key()));
    let graph = KnowledgeGraph {
        entities: entities.into_iter().map(|e| (e.id.clone(), e)).collect(),
        relations,
    };
    graph
        .check()
        .map_err(|m| Error::Config(format!("{}: {m}", dir.join(RELATIONS).display())))?;
    Ok(graph)
}

pub fn save_communities(path: &Path, communities: &[Community]) -> Result<()> {
    write_json(path, communities)
}

pub fn load_communities(path: &Path) -> Result<Vec<Community>> {
    read_json(path)
}

/// What one pipeline stage consumed and produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageRecord {
    pub config: serde_json::Value,
    pub seed: u64,
    pub providers: BTreeMap<String, String>,
    /// Artifact file name to sha256 at the time the stage ran.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
    pub finished_unix: u64,
}

impl StageRecord {
    /// Hashes each named file in `dir` into `outputs`.
    pub fn hash_outputs(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for name in names {
            self.outputs.insert(name.to_string(), file_hash(&dir.join(name))?);
        }
        Ok(())
    }

    pub fn hash_inputs(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for name in names {
            self.inputs.insert(name.to_string(), file_hash(&dir.join(name))?);
        }
        Ok(())
    }

    pub fn stamp(&mut self) {
        self.finished_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArtifactState {
    Missing,
    /// Present but never recorded as a stage output.
    Unrecorded,
    /// Content differs from what the producing stage recorded.
    Stale { recorded: String, actual: String },
    Fresh,
}

/// Per-stage records for one run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// Loads `manifest.json` from `dir`, or an empty manifest if absent.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }

    /// Hash recorded by whichever stage produced `artifact`.
    pub fn recorded_hash(&self, artifact: &str) -> Option<&str> {
        self.stages
            .values()
            .find_map(|s| s.outputs.get(artifact))
            .map(String::as_str)
    }

    pub fn artifact_state(&self, dir: &Path, artifact: &str) -> Result<ArtifactState> {
        let path = dir.join(artifact);
        if !path.exists() {
            return Ok(ArtifactState::Missing);
        }
        let Some(recorded) = self.recorded_hash(artifact) else {
            return Ok(ArtifactState::Unrecorded);
        };
        let actual = file_hash(&path)?;
        Ok(if actual == recorded {
            ArtifactState::Fresh
        } else {
            ArtifactState::Stale {
                recorded: recorded.to_string(),
                actual,
            }
        })
    }
}
