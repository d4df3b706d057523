use thiserror::Error;

use crate::codec::{emit_code, lower, parse_code};
use crate::graph::validate;
use crate::knowledge::{retrieve, EmbedError};
use crate::llm::{extract_tag, strip_code_fence, LlmError};
use crate::prompts;
use crate::schema::NodeSchemaRegistry;

use super::{render_reference, render_reference_entry, render_workspace, AgentContext, AgentMemory, ReferenceEntry, TaskBrief, Workspace};

/// Code and annotation proposed by an editor, not yet checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub code: String,
    pub function: String,
    pub principle: String,
}

impl Candidate {
    fn as_workspace(&self) -> Workspace {
        Workspace {
            code: self.code.clone(),
            function: self.function.clone(),
            principle: self.principle.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditFailure {
    #[error("{0}")]
    Precondition(String),
    #[error("the answer has no <code> tag, even after a reprompt")]
    MissingCode,
    #[error("the workflow still has errors after {refiner_calls} refinement(s): {last_error}")]
    Rejected { refiner_calls: u32, last_error: String },
    #[error("retrieval failed: {0}")]
    Retrieval(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Parse, lower and validate candidate code. On success the workspace
/// holds the canonical form of the code.
pub fn check_candidate(candidate: &Candidate, registry: &NodeSchemaRegistry) -> Result<Workspace, String> {
    let script = parse_code(&candidate.code).map_err(|e| e.to_string())?;
    if script.is_empty() {
        return Err("the code has no statements".into());
    }
    let graph = lower(&script, registry).map_err(|e| e.to_string())?;
    let report = validate(&graph, registry);
    if report.error_count() > 0 {
        return Err(report.to_string());
    }
    let code = emit_code(&graph, registry).map_err(|e| e.to_string())?;
    Ok(Workspace {
        code,
        function: candidate.function.clone(),
        principle: candidate.principle.clone(),
    })
}

/// Pull code and annotation out of an editor answer. A missing annotation
/// falls back to `previous`.
fn read_candidate(response: &str, previous: &Workspace) -> Option<Candidate> {
    let code = extract_tag(response, "code").ok()?;
    let code = strip_code_fence(&code);
    let code = code.strip_prefix("python\n").unwrap_or(code).trim().to_string();
    Some(Candidate {
        code,
        function: extract_tag(response, "function").unwrap_or_else(|_| previous.function.clone()),
        principle: extract_tag(response, "principle").unwrap_or_else(|_| previous.principle.clone()),
    })
}

fn ask_editor(ctx: &AgentContext<'_>, label: &str, prompt: String, previous: &Workspace) -> Result<Candidate, EditFailure> {
    let response = ctx.ask(label, prompt.clone())?;
    if let Some(c) = read_candidate(&response, previous) {
        return Ok(c);
    }
    let retry = format!(
        "{prompt}\n\nYour previous answer could not be used: it has no <code> tag. Answer again with the required format."
    );
    let response = ctx.ask(label, retry)?;
    read_candidate(&response, previous).ok_or(EditFailure::MissingCode)
}

/// Gate every candidate: accept it if it checks cleanly, otherwise ask the
/// refiner up to `attempts` times. A rejection leaves the caller's
/// workspace untouched.
pub fn apply_refine(
    ctx: &AgentContext<'_>,
    reference: &[ReferenceEntry],
    task: &TaskBrief,
    candidate: Candidate,
    attempts: u32,
) -> Result<Workspace, EditFailure> {
    let mut candidate = candidate;
    let mut reference = reference.to_vec();
    let mut calls = 0;
    loop {
        let error = match check_candidate(&candidate, ctx.registry) {
            Ok(ws) => return Ok(ws),
            Err(e) => e,
        };
        if calls == attempts {
            return Err(EditFailure::Rejected {
                refiner_calls: calls,
                last_error: error,
            });
        }
        calls += 1;
        let current = candidate.as_workspace();
        let build = |reference: &[ReferenceEntry]| {
            prompts::fill(
                prompts::REFINE,
                &[
                    ("instruction", &task.instruction),
                    ("analysis", &task.analysis),
                    ("reference", &render_reference(reference)),
                    ("workspace", &render_workspace(&current)),
                    ("refinement", &error),
                ],
            )
        };
        let response = match ctx.ask("refine", build(&reference)) {
            Err(LlmError::ContextLength(_)) if !reference.is_empty() => {
                reference.pop();
                ctx.ask("refine", build(&reference))?
            }
            other => other?,
        };
        if let Some(next) = read_candidate(&response, &current) {
            candidate = next;
        }
    }
}

pub fn apply_combine(
    ctx: &AgentContext<'_>,
    memory: &AgentMemory,
    task: &TaskBrief,
    name: &str,
    schedule: &str,
) -> Result<Workspace, EditFailure> {
    if memory.workspace.is_empty() {
        return Err(EditFailure::Precondition("combine needs a workflow in the workspace".into()));
    }
    let entry = memory
        .reference
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| EditFailure::Precondition(format!("{name:?} is not in the reference")))?;
    let prompt = prompts::fill(
        prompts::COMBINE,
        &[
            ("instruction", &task.instruction),
            ("analysis", &task.analysis),
            ("reference", &render_reference_entry(entry)),
            ("workspace", &render_workspace(&memory.workspace)),
            ("schedule", schedule),
        ],
    );
    let candidate = ask_editor(ctx, "combine", prompt, &memory.workspace)?;
    apply_refine(ctx, &memory.reference, task, candidate, ctx.config.refine_attempts)
}

pub fn apply_adapt(
    ctx: &AgentContext<'_>,
    memory: &AgentMemory,
    task: &TaskBrief,
    adaptation: &str,
    schedule: &str,
) -> Result<Workspace, EditFailure> {
    if memory.workspace.is_empty() {
        return Err(EditFailure::Precondition("adapt needs a workflow in the workspace".into()));
    }
    let prompt = prompts::fill(
        prompts::ADAPT,
        &[
            ("instruction", &task.instruction),
            ("analysis", &task.analysis),
            ("workspace", &render_workspace(&memory.workspace)),
            ("schedule", schedule),
            ("adaptation", adaptation),
        ],
    );
    let candidate = ask_editor(ctx, "adapt", prompt, &memory.workspace)?;
    apply_refine(ctx, &memory.reference, task, candidate, ctx.config.refine_attempts)
}

/// New reference set: the top-k store entries for `query`.
pub fn apply_retrieve(ctx: &AgentContext<'_>, query: &str) -> Result<Vec<ReferenceEntry>, EmbedError> {
    Ok(retrieve(ctx.store, query, ctx.config.retrieval_k, ctx.embedder)?
        .into_iter()
        .map(|hit| ReferenceEntry::from(hit.workflow))
        .collect())
}
