//! Ontology-guided reverse-thinking question answering over knowledge graphs.
//!
//! The engine answers natural-language questions against a triple store in
//! three phases:
//!
//! 1. **Recognition** — an LLM extracts the question's *conditions* (known
//!    entities and their labels) and *aims* (what is asked for, as labels).
//! 2. **Reverse label reasoning** — starting from the aim labels, a reverse
//!    tree is expanded over the neighbor label dictionary derived from the
//!    graph's ontology, pruned by the condition labels, and flipped into
//!    forward label paths; an LLM then filters the candidates semantically.
//! 3. **Guided answer mining** — each selected label path is walked over the
//!    concrete graph, collecting entity paths that are handed to the LLM to
//!    generate the final answers.
//!
//! The crate also ships the evaluation harness (Hit@1 / accuracy / precision /
//! recall / F1) and a deterministic mock LLM backend so the whole pipeline is
//! reproducible offline.

pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gateway;
pub mod kg;
pub mod miner;
pub mod ontology;
pub mod pipeline;
pub mod reasoner;
