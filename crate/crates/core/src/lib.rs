//! Event-centric temporal retrieval-augmented generation.
//!
//! Documents are decomposed into dynamic event units (one dated, self-contained
//! statement each), linked into a weighted event graph by shared entities and
//! temporal proximity, and indexed with time-enhanced embeddings. Questions are
//! answered by time-aware vector search, reranking, weighted random walks over
//! the graph, and a chronological timeline prompt.

pub mod config;
pub mod encoding;
pub mod engine;
pub mod evaluation;
pub mod gateway;
pub mod generation;
pub mod graph;
pub mod index;
pub mod ingestion;
pub mod model;
pub mod prompts;
pub mod retrieval;
pub mod text;
