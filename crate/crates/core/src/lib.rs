//! Workflow graphs for node-based generative pipelines: a prompt-JSON
//! codec, a reversible code representation, schema validation, a
//! retrieval-backed planning agent and an evaluation harness.

pub mod agent;
pub mod bench;
pub mod cli;
pub mod codec;
pub mod graph;
pub mod knowledge;
pub mod llm;
pub mod prompts;
pub mod schema;

/// Bundled node docs, curriculum and prompt data.
pub const DATA_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
