//! Annotated curriculum workflows and embedding retrieval over them.
//!
//! A corpus directory holds `<name>.json` (prompt JSON) next to
//! `<name>.txt`, whose `<function>` and `<principle>` tags annotate it.

mod embed;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{emit_code, CodecError};
use crate::graph::{parse_prompt_json, validate, JsonError, ValidationReport, WorkflowGraph};
use crate::llm::extract_tag;
use crate::schema::NodeSchemaRegistry;

pub use embed::{
    cosine, EmbedError, Embedder, EmbeddingCache, EmbeddingProvider, EmbeddingVector, HashEmbedder, HttpEmbedder,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedWorkflow {
    pub name: String,
    pub graph: WorkflowGraph,
    /// Canonical code of `graph`.
    pub code: String,
    pub function: String,
    pub principle: String,
}

impl AnnotatedWorkflow {
    /// Text that retrieval embeds for this workflow.
    pub fn index_text(&self) -> String {
        format!("{}\n{}", self.function, self.principle)
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("workflow {name:?}: {source}")]
    Json {
        name: String,
        #[source]
        source: JsonError,
    },
    #[error("workflow {name:?} has no annotation file")]
    MissingAnnotation { name: String },
    #[error("workflow {name:?}: annotation needs non-empty <function> and <principle> tags")]
    BadAnnotation { name: String },
    #[error("workflow {name:?} does not validate:\n{report}")]
    Invalid { name: String, report: ValidationReport },
    #[error("workflow {name:?}: {source}")]
    Codec {
        name: String,
        #[source]
        source: CodecError,
    },
    #[error("workflow name {0:?} appears twice")]
    Duplicate(String),
}

/// Immutable set of annotated workflows, ordered by name.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeStore {
    workflows: Vec<AnnotatedWorkflow>,
    by_name: HashMap<String, usize>,
}

impl KnowledgeStore {
    pub fn from_workflows(mut workflows: Vec<AnnotatedWorkflow>) -> Result<Self, KnowledgeError> {
        workflows.sort_by(|a, b| a.name.cmp(&b.name));
        let mut by_name = HashMap::new();
        for (i, w) in workflows.iter().enumerate() {
            if by_name.insert(w.name.clone(), i).is_some() {
                return Err(KnowledgeError::Duplicate(w.name.clone()));
            }
        }
        Ok(KnowledgeStore { workflows, by_name })
    }

    pub fn len(&self) -> usize {
        self.workflows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workflows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotatedWorkflow> {
        self.workflows.iter()
    }

    pub fn get(&self, name: &str) -> Option<&AnnotatedWorkflow> {
        self.by_name.get(name).map(|&i| &self.workflows[i])
    }
}

/// Load every `<name>.json` in `dir` with its `<name>.txt` annotation.
/// Each graph must validate against `registry`; its code is regenerated.
pub fn ingest_corpus(dir: &Path, registry: &NodeSchemaRegistry) -> Result<KnowledgeStore, KnowledgeError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| KnowledgeError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io(dir))?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();

    let mut workflows = Vec::with_capacity(paths.len());
    for path in paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let bytes = fs::read(&path).map_err(io(&path))?;
        let graph = parse_prompt_json(&bytes).map_err(|source| KnowledgeError::Json {
            name: name.clone(),
            source,
        })?;
        let note_path = path.with_extension("txt");
        let note = match fs::read_to_string(&note_path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(KnowledgeError::MissingAnnotation { name })
            }
            Err(e) => return Err(io(&note_path)(e)),
        };
        let (Ok(function), Ok(principle)) = (extract_tag(&note, "function"), extract_tag(&note, "principle")) else {
            return Err(KnowledgeError::BadAnnotation { name });
        };
        if function.is_empty() || principle.is_empty() {
            return Err(KnowledgeError::BadAnnotation { name });
        }
        let report = validate(&graph, registry);
        if !report.is_valid() {
            return Err(KnowledgeError::Invalid { name, report });
        }
        let code = emit_code(&graph, registry).map_err(|source| KnowledgeError::Codec {
            name: name.clone(),
            source,
        })?;
        workflows.push(AnnotatedWorkflow {
            name,
            graph,
            code,
            function,
            principle,
        });
    }
    KnowledgeStore::from_workflows(workflows)
}

#[derive(Debug, Clone, Copy)]
pub struct RetrievalHit<'a> {
    pub workflow: &'a AnnotatedWorkflow,
    pub score: f64,
}

/// Top `k` workflows by cosine similarity between the query and each
/// workflow's annotation. Equal scores are ordered by name.
pub fn retrieve<'a>(
    store: &'a KnowledgeStore,
    query: &str,
    k: usize,
    embedder: &Embedder,
) -> Result<Vec<RetrievalHit<'a>>, EmbedError> {
    if store.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let mut texts: Vec<String> = store.iter().map(AnnotatedWorkflow::index_text).collect();
    texts.push(query.to_string());
    let mut vectors = embedder.embed_many(&texts)?;
    let q = vectors.pop().expect("query vector");
    let mut hits = store
        .iter()
        .zip(&vectors)
        .map(|(workflow, v)| Ok(RetrievalHit {
            workflow,
            score: cosine(&q, v)?,
        }))
        .collect::<Result<Vec<_>, EmbedError>>()?;
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.workflow.name.cmp(&b.workflow.name))
    });
    hits.truncate(k);
    Ok(hits)
}
