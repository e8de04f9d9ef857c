//! Semantic chunking, knowledge-graph construction with hierarchical
//! community reports, naive/local/global retrieval, and answer-quality
//! evaluation for retrieval-augmented generation.
//!
//! Model calls go through [`embeddings::EmbeddingProvider`] and
//! [`llm::LlmClient`]; both have deterministic offline implementations so
//! every stage can run without a model server.

pub mod chunker;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod evalkit;
pub mod http;
pub mod kgraph;
pub mod llm;
pub mod registry;
pub mod retrieval;
pub mod store;
pub mod text;

pub use error::{Error, Result};
