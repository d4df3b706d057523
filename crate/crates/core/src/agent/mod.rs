//! Planner loop over a three-part memory (history, reference, workspace)
//! with load/combine/adapt/retrieve/finish actions and a refine gate in
//! front of every workspace write.

mod action;
mod edit;
mod render;

use serde::{Deserialize, Serialize};

use crate::codec::{lower, parse_code};
use crate::graph::{parse_prompt_json, serialize_prompt_json, WorkflowGraph};
use crate::knowledge::{AnnotatedWorkflow, Embedder, KnowledgeStore};
use crate::llm::{extract_tag, CompletionRequest, Gateway, LlmError};
use crate::prompts;
use crate::schema::NodeSchemaRegistry;

pub use action::{enforce_rules, parse_action, Action, ActionError, RuleViolation};
pub use edit::{apply_adapt, apply_combine, apply_refine, apply_retrieve, check_candidate, Candidate, EditFailure};
pub use render::{render_history, render_reference, render_reference_entry, render_workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub model: String,
    pub step_budget: u32,
    /// Refiner calls allowed per combine or adapt.
    pub refine_attempts: u32,
    pub retrieval_k: usize,
    /// Most recent steps shown to the planner; `None` shows all.
    pub history_cap: Option<usize>,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            model: "gpt-4o".into(),
            step_budget: 5,
            refine_attempts: 2,
            retrieval_k: 5,
            history_cap: None,
            temperature: 0.0,
            seed: None,
        }
    }
}

/// Everything an episode reads but never changes.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub store: &'a KnowledgeStore,
    pub registry: &'a NodeSchemaRegistry,
    pub gateway: &'a Gateway,
    pub embedder: &'a Embedder,
    pub config: &'a AgentConfig,
}

impl AgentContext<'_> {
    pub(crate) fn ask(&self, label: &str, text: String) -> Result<String, LlmError> {
        let request = CompletionRequest::prompt(self.config.model.clone(), text)
            .with_temperature(self.config.temperature)
            .with_seed(self.config.seed);
        self.gateway.complete(label, &request)
    }
}

/// Instruction plus the analysis written for it at episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBrief {
    pub instruction: String,
    pub analysis: String,
}

/// Current workflow as canonical code with its annotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub code: String,
    pub function: String,
    pub principle: String,
}

impl Workspace {
    pub fn is_empty(&self) -> bool {
        self.code.trim().is_empty()
    }

    pub fn from_workflow(w: &AnnotatedWorkflow) -> Self {
        Workspace {
            code: w.code.clone(),
            function: w.function.clone(),
            principle: w.principle.clone(),
        }
    }

    /// Lowered graph. The refine gate guarantees this succeeds for a
    /// workspace it produced.
    pub fn graph(&self, registry: &NodeSchemaRegistry) -> Option<WorkflowGraph> {
        if self.is_empty() {
            return None;
        }
        lower(&parse_code(&self.code).ok()?, registry).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub name: String,
    pub code: String,
    pub function: String,
    pub principle: String,
}

impl From<&AnnotatedWorkflow> for ReferenceEntry {
    fn from(w: &AnnotatedWorkflow) -> Self {
        ReferenceEntry {
            name: w.name.clone(),
            code: w.code.clone(),
            function: w.function.clone(),
            principle: w.principle.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum StepOutcome {
    Applied,
    /// No usable action, or one that broke a rule, even after a reprompt.
    Rejected { reason: String },
    /// The action was accepted but could not be carried out.
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u32,
    pub thought: String,
    pub plan: String,
    /// Action text as the planner wrote it.
    pub action_text: String,
    pub action: Option<Action>,
    #[serde(flatten)]
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentMemory {
    pub history: Vec<StepRecord>,
    pub reference: Vec<ReferenceEntry>,
    pub workspace: Workspace,
}

impl AgentMemory {
    /// Most recent action that passed the rules, whether or not it then
    /// succeeded.
    pub fn last_accepted(&self) -> Option<&Action> {
        self.history
            .iter()
            .rev()
            .find(|s| !matches!(s.outcome, StepOutcome::Rejected { .. }))
            .and_then(|s| s.action.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Finish,
    BudgetExhausted,
    FatalError,
}

mod prompt_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(graph: &Option<WorkflowGraph>, s: S) -> Result<S::Ok, S::Error> {
        match graph {
            None => s.serialize_none(),
            Some(g) => {
                let value: serde_json::Value =
                    serde_json::from_slice(&serialize_prompt_json(g)).map_err(serde::ser::Error::custom)?;
                s.serialize_some(&value)
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<WorkflowGraph>, D::Error> {
        let value: Option<serde_json::Value> = Option::deserialize(d)?;
        value
            .map(|v| parse_prompt_json(v.to_string().as_bytes()).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub instruction: String,
    pub analysis: String,
    pub terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: Vec<StepRecord>,
    pub workspace: Workspace,
    #[serde(with = "prompt_json")]
    pub workflow: Option<WorkflowGraph>,
    pub transcript_lines: usize,
    pub transcript_digest: String,
}

impl EpisodeResult {
    pub fn actions(&self) -> Vec<&Action> {
        self.steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Applied)
            .filter_map(|s| s.action.as_ref())
            .collect()
    }
}

struct Decision {
    thought: String,
    plan: String,
    action_text: String,
    action: Result<Action, String>,
}

fn decide(response: &str, memory: &AgentMemory) -> Decision {
    let thought = extract_tag(response, "thought").unwrap_or_default();
    let plan = extract_tag(response, "plan").unwrap_or_default();
    let (action_text, action) = match extract_tag(response, "action") {
        Err(e) => (String::new(), Err(e.to_string())),
        Ok(text) => {
            let action = parse_action(&text)
                .map_err(|e| e.to_string())
                .and_then(|a| enforce_rules(memory, &a).map(|()| a).map_err(|e| e.to_string()));
            (text, action)
        }
    };
    Decision {
        thought,
        plan,
        action_text,
        action,
    }
}

fn reprompt(prompt: &str, problem: &str) -> String {
    format!("{prompt}\n\nYour previous answer could not be used: {problem}. Answer again with the required format.")
}

fn plan_prompt(memory: &AgentMemory, task: &TaskBrief, remaining: u32, cap: Option<usize>) -> String {
    prompts::fill(
        prompts::PLAN,
        &[
            ("instruction", &task.instruction),
            ("analysis", &task.analysis),
            ("reference", &render_reference(&memory.reference)),
            ("history", &render_history(&memory.history, cap)),
            ("workspace", &render_workspace(&memory.workspace)),
            ("limitation", &remaining.to_string()),
        ],
    )
}

/// Ask the planner. A context-length rejection drops the lowest-ranked
/// reference and tries once more.
fn ask_planner(
    ctx: &AgentContext<'_>,
    memory: &mut AgentMemory,
    task: &TaskBrief,
    remaining: u32,
    problem: Option<&str>,
) -> Result<String, LlmError> {
    let build = |m: &AgentMemory| {
        let p = plan_prompt(m, task, remaining, ctx.config.history_cap);
        match problem {
            Some(problem) => reprompt(&p, problem),
            None => p,
        }
    };
    match ctx.ask("plan", build(memory)) {
        Err(LlmError::ContextLength(_)) if !memory.reference.is_empty() => {
            memory.reference.pop();
            ctx.ask("plan", build(memory))
        }
        other => other,
    }
}

fn analyse(ctx: &AgentContext<'_>, instruction: &str) -> Result<String, LlmError> {
    let response = ctx.ask("analysis", prompts::fill(prompts::ANALYSIS, &[("instruction", instruction)]))?;
    Ok(extract_tag(&response, "analysis").unwrap_or_else(|_| response.trim().to_string()))
}

/// Run one episode for `instruction`.
pub fn run_episode(ctx: &AgentContext<'_>, instruction: &str) -> EpisodeResult {
    let mut memory = AgentMemory::default();
    let mut task = TaskBrief {
        instruction: instruction.to_string(),
        analysis: String::new(),
    };
    let mut terminated_by = Termination::BudgetExhausted;
    let mut error = None;

    let setup = analyse(ctx, instruction).map_err(|e| e.to_string()).and_then(|analysis| {
        task.analysis = analysis;
        apply_retrieve(ctx, instruction).map_err(|e| e.to_string())
    });
    match setup {
        Ok(reference) => memory.reference = reference,
        Err(e) => {
            terminated_by = Termination::FatalError;
            error = Some(e);
        }
    }

    let budget = if error.is_some() { 0 } else { ctx.config.step_budget };
    for index in 1..=budget {
        let remaining = budget - index + 1;
        let first = match ask_planner(ctx, &mut memory, &task, remaining, None) {
            Ok(r) => r,
            Err(e) => {
                terminated_by = Termination::FatalError;
                error = Some(e.to_string());
                break;
            }
        };
        let mut decision = decide(&first, &memory);
        if let Err(problem) = &decision.action {
            let problem = problem.clone();
            match ask_planner(ctx, &mut memory, &task, remaining, Some(&problem)) {
                Ok(r) => decision = decide(&r, &memory),
                Err(e) => {
                    terminated_by = Termination::FatalError;
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let Decision {
            thought,
            plan,
            action_text,
            action,
        } = decision;
        let mut record = StepRecord {
            index,
            thought,
            plan,
            action_text,
            action: None,
            outcome: StepOutcome::Applied,
        };
        let action = match action {
            Ok(a) => a,
            Err(reason) => {
                record.outcome = StepOutcome::Rejected { reason };
                memory.history.push(record);
                continue;
            }
        };
        record.action = Some(action.clone());

        let result: Result<(), EditFailure> = match &action {
            Action::Finish => {
                if memory.workspace.is_empty() {
                    let reason = "finish was chosen while the workspace is empty".to_string();
                    record.outcome = StepOutcome::Failed { reason: reason.clone() };
                    memory.history.push(record);
                    terminated_by = Termination::FatalError;
                    error = Some(reason);
                } else {
                    memory.history.push(record);
                    terminated_by = Termination::Finish;
                }
                break;
            }
            Action::Load { name } => {
                match ctx.store.get(name) {
                    Some(w) => memory.workspace = Workspace::from_workflow(w),
                    // a reference the store lost cannot be loaded
                    None => {
                        record.outcome = StepOutcome::Failed {
                            reason: format!("{name:?} is not in the knowledge store"),
                        }
                    }
                }
                Ok(())
            }
            Action::Combine { name } => {
                apply_combine(ctx, &memory, &task, name, &record.plan).map(|ws| memory.workspace = ws)
            }
            Action::Adapt { prompt } => {
                apply_adapt(ctx, &memory, &task, prompt, &record.plan).map(|ws| memory.workspace = ws)
            }
            Action::Retrieve { prompt } => match apply_retrieve(ctx, prompt) {
                Ok(reference) => {
                    memory.reference = reference;
                    Ok(())
                }
                Err(e) => Err(EditFailure::Retrieval(e.to_string())),
            },
        };
        match result {
            Ok(()) => {}
            Err(EditFailure::Llm(e)) if !matches!(e, LlmError::ContextLength(_)) => {
                record.outcome = StepOutcome::Failed { reason: e.to_string() };
                memory.history.push(record);
                terminated_by = Termination::FatalError;
                error = Some(e.to_string());
                break;
            }
            Err(e) => record.outcome = StepOutcome::Failed { reason: e.to_string() },
        }
        memory.history.push(record);
    }

    let workflow = match terminated_by {
        Termination::FatalError => None,
        _ => memory.workspace.graph(ctx.registry),
    };
    let transcript = ctx.gateway.transcript();
    EpisodeResult {
        instruction: task.instruction,
        analysis: task.analysis,
        terminated_by,
        error,
        steps: memory.history,
        workspace: memory.workspace,
        workflow,
        transcript_lines: transcript.len(),
        transcript_digest: transcript.digest(),
    }
}
