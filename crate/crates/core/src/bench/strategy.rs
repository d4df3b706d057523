use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{render_reference_entry, run_episode, AgentConfig, AgentContext, ReferenceEntry};
use crate::codec::{emit_code, lower, parse_code};
use crate::graph::WorkflowGraph;
use crate::knowledge::{retrieve, Embedder, KnowledgeStore};
use crate::llm::{extract_tag, strip_code_fence, CompletionRequest, Gateway, LlmError, Transcript};
use crate::prompts;
use crate::schema::NodeSchemaRegistry;

use super::exec::{Artifact, Backend};
use super::judge::{judge_resolve, JudgeOptions};
use super::tasks::{Category, Modality, Task};
use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ZeroShot,
    FewShot,
    Cot,
    CotSc,
    Rag,
    #[serde(rename = "comfyagent")]
    ComfyAgent,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::ZeroShot,
        Strategy::FewShot,
        Strategy::Cot,
        Strategy::CotSc,
        Strategy::Rag,
        Strategy::ComfyAgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero-shot",
            Strategy::FewShot => "few-shot",
            Strategy::Cot => "cot",
            Strategy::CotSc => "cot-sc",
            Strategy::Rag => "rag",
            Strategy::ComfyAgent => "comfyagent",
        }
    }

    /// Name used in report rows.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "Zero-shot",
            Strategy::FewShot => "Few-shot",
            Strategy::Cot => "CoT",
            Strategy::CotSc => "CoT-SC",
            Strategy::Rag => "RAG",
            Strategy::ComfyAgent => "ComfyAgent",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of zero-shot, few-shot, cot, cot-sc, rag, comfyagent"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub model: String,
    pub demonstrations: usize,
    pub sc_trajectories: usize,
    pub sc_temperature: f64,
    pub rag_k: usize,
    /// Tasks in flight at once.
    pub parallelism: usize,
    pub seed: u64,
    pub judge: JudgeOptions,
    pub agent: AgentConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            model: "gpt-4o".into(),
            demonstrations: 3,
            sc_trajectories: 3,
            sc_temperature: 0.7,
            rag_k: 5,
            parallelism: 4,
            seed: 0,
            judge: JudgeOptions::default(),
            agent: AgentConfig::default(),
        }
    }
}

/// Shared, read-only inputs of a run.
#[derive(Clone, Copy)]
pub struct BenchEnv<'a> {
    pub store: &'a KnowledgeStore,
    pub registry: &'a NodeSchemaRegistry,
    pub embedder: &'a Embedder,
    pub llm: &'a Gateway,
    pub judge: &'a Gateway,
    pub backend: &'a dyn Backend,
    pub config: &'a BenchConfig,
    /// Per-task transcripts go to `<dir>/<strategy>/<task>.jsonl`.
    pub transcript_dir: Option<&'a Path>,
}

/// One task of one strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub strategy: Strategy,
    pub model: String,
    pub backend: String,
    pub task_id: String,
    pub category: Category,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub passed: bool,
    pub resolved: bool,
    pub message: String,
    #[serde(default)]
    pub outputs: Vec<Artifact>,
    #[serde(default)]
    pub judge_calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_analysis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
    pub transcript_digest: String,
}

struct LogInner {
    rows: Vec<RunRow>,
    file: Option<File>,
}

/// Append-only JSON-lines log of rows; reopening it resumes a run.
pub struct RunLog {
    path: Option<PathBuf>,
    inner: Mutex<LogInner>,
}

impl RunLog {
    pub fn in_memory() -> Self {
        RunLog {
            path: None,
            inner: Mutex::new(LogInner {
                rows: Vec::new(),
                file: None,
            }),
        }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, BenchError> {
        let path = path.into();
        let io = |source| BenchError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let rows = if path.exists() {
            read_rows(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(RunLog {
            path: Some(path),
            inner: Mutex::new(LogInner { rows, file: Some(file) }),
        })
    }

    pub fn rows(&self) -> Vec<RunRow> {
        self.inner.lock().expect("run log lock").rows.clone()
    }

    pub fn contains(&self, strategy: Strategy, task_id: &str) -> bool {
        self.inner
            .lock()
            .expect("run log lock")
            .rows
            .iter()
            .any(|r| r.strategy == strategy && r.task_id == task_id)
    }

    fn append(&self, row: RunRow) -> Result<(), BenchError> {
        let mut inner = self.inner.lock().expect("run log lock");
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&row).expect("rows serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|source| BenchError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        inner.rows.push(row);
        Ok(())
    }
}

/// Rows of a run log file, in file order.
pub fn read_rows(path: &Path) -> Result<Vec<RunRow>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::RunLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn task_seed(seed: u64, strategy: Strategy, task_id: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(strategy.as_str())
        .chain_update([0])
        .chain_update(task_id)
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn combined_digest(transcripts: &[Arc<Transcript>]) -> String {
    let mut hasher = Sha256::new();
    for t in transcripts {
        for line in t.lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
    }
    hex::encode(hasher.finalize())
}

fn render_demonstrations(entries: &[ReferenceEntry]) -> String {
    if entries.is_empty() {
        return String::new();
    }
    let body = entries
        .iter()
        .map(|e| format!("- Example: {}\n\n{}", e.name, render_reference_entry(e)))
        .collect::<Vec<_>>()
        .join("\n\n");
    format!("## Examples\n\n{body}\n\n")
}

const PLAIN_FORMAT: &str = "Write the complete workflow code and enclose it in the <code> tag.";
const COT_FORMAT: &str = "First think step by step about the nodes and links the task needs, and enclose your reasoning in the <thought> tag. Then write the complete workflow code and enclose it in the <code> tag.";

/// Single-shot prompt of a baseline strategy.
pub fn baseline_prompt(instruction: &str, demonstrations: &[ReferenceEntry], chain_of_thought: bool) -> String {
    prompts::fill(
        prompts::BASELINE,
        &[
            ("instruction", instruction),
            ("demonstrations", &render_demonstrations(demonstrations)),
            ("format", if chain_of_thought { COT_FORMAT } else { PLAIN_FORMAT }),
        ],
    )
}

fn pick_demonstrations(store: &KnowledgeStore, n: usize, seed: u64) -> Vec<ReferenceEntry> {
    let all: Vec<_> = store.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.choose_multiple(&mut rng, n.min(all.len()))
        .map(|w| ReferenceEntry::from(*w))
        .collect()
}

/// Code of a baseline answer, or why there is none.
fn answer_code(response: &str) -> Result<String, String> {
    let code = extract_tag(response, "code").map_err(|e| e.to_string())?;
    let code = strip_code_fence(&code);
    Ok(code.strip_prefix("python\n").unwrap_or(code).trim().to_string())
}

/// Parse and lower code; on success also return the canonical text.
fn build(code: &str, registry: &NodeSchemaRegistry) -> Result<(WorkflowGraph, String), String> {
    let script = parse_code(code).map_err(|e| e.to_string())?;
    let graph = lower(&script, registry).map_err(|e| e.to_string())?;
    let canonical = emit_code(&graph, registry).unwrap_or_else(|_| code.to_string());
    Ok((graph, canonical))
}

/// Index of the majority answer; ties go to the earliest.
pub fn majority(keys: &[String]) -> Option<usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    keys.iter().position(|k| counts[k.as_str()] == best)
}

struct Generated {
    code: Option<String>,
    graph: Option<WorkflowGraph>,
    error: Option<String>,
    termination: Option<String>,
}

impl Generated {
    fn failed(error: String) -> Self {
        Generated {
            code: None,
            graph: None,
            error: Some(error),
            termination: None,
        }
    }

    fn from_code(code: Result<String, String>, registry: &NodeSchemaRegistry) -> Self {
        let code = match code {
            Ok(c) => c,
            Err(e) => return Generated::failed(e),
        };
        match build(&code, registry) {
            Ok((graph, canonical)) => Generated {
                code: Some(canonical),
                graph: Some(graph),
                error: None,
                termination: None,
            },
            Err(e) => Generated {
                code: Some(code),
                graph: None,
                error: Some(e),
                termination: None,
            },
        }
    }
}

fn ask(gateway: &Gateway, label: &str, request: &CompletionRequest) -> Result<String, String> {
    gateway.complete(label, request).map_err(|e: LlmError| e.to_string())
}

fn generate(
    env: &BenchEnv<'_>,
    strategy: Strategy,
    task: &Task,
    gateway: &Gateway,
    extra: &mut Vec<Arc<Transcript>>,
) -> Generated {
    let config = env.config;
    let seed = task_seed(config.seed, strategy, &task.id);
    let request = |demos: &[ReferenceEntry], cot: bool| {
        CompletionRequest::prompt(config.model.clone(), baseline_prompt(&task.instruction, demos, cot)).with_seed(Some(seed))
    };
    match strategy {
        Strategy::ZeroShot => Generated::from_code(ask(gateway, "zero-shot", &request(&[], false)).and_then(|r| answer_code(&r)), env.registry),
        Strategy::FewShot | Strategy::Cot => {
            let demos = pick_demonstrations(env.store, config.demonstrations, seed);
            let cot = strategy == Strategy::Cot;
            Generated::from_code(
                ask(gateway, strategy.as_str(), &request(&demos, cot)).and_then(|r| answer_code(&r)),
                env.registry,
            )
        }
        Strategy::Rag => {
            let demos: Vec<ReferenceEntry> = match retrieve(env.store, &task.instruction, config.rag_k, env.embedder) {
                Ok(hits) => hits.into_iter().map(|h| ReferenceEntry::from(h.workflow)).collect(),
                Err(e) => return Generated::failed(format!("retrieval failed: {e}")),
            };
            Generated::from_code(ask(gateway, "rag", &request(&demos, false)).and_then(|r| answer_code(&r)), env.registry)
        }
        Strategy::CotSc => {
            let demos = pick_demonstrations(env.store, config.demonstrations, seed);
            let n = config.sc_trajectories.max(1);
            let transcripts: Vec<Arc<Transcript>> = (0..n).map(|_| Transcript::new()).collect();
            let answers: Vec<Result<String, String>> = std::thread::scope(|s| {
                let handles: Vec<_> = transcripts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let g = gateway.with_transcript(t.clone());
                        let req = request(&demos, true)
                            .with_temperature(config.sc_temperature)
                            .with_seed(Some(seed.wrapping_add(i as u64)));
                        s.spawn(move || ask(&g, "cot-sc", &req).and_then(|r| answer_code(&r)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("trajectory thread")).collect()
            });
            extra.extend(transcripts);
            let candidates: Vec<Generated> = answers.into_iter().map(|a| Generated::from_code(a, env.registry)).collect();
            let usable: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].code.is_some()).collect();
            if usable.is_empty() {
                let reasons: Vec<String> = candidates.iter().filter_map(|c| c.error.clone()).collect();
                return Generated::failed(format!("no trajectory produced code: {}", reasons.join("; ")));
            }
            let keys: Vec<String> = usable.iter().map(|&i| candidates[i].code.clone().unwrap_or_default()).collect();
            let pick = usable[majority(&keys).expect("at least one key")];
            candidates.into_iter().nth(pick).expect("picked candidate")
        }
        Strategy::ComfyAgent => {
            let agent_config = AgentConfig {
                model: config.model.clone(),
                seed: config.agent.seed.or(Some(seed)),
                ..config.agent.clone()
            };
            let ctx = AgentContext {
                store: env.store,
                registry: env.registry,
                gateway,
                embedder: env.embedder,
                config: &agent_config,
            };
            let result = run_episode(&ctx, &task.instruction);
            let termination = serde_json::to_value(result.terminated_by)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string));
            match result.workflow {
                Some(graph) => Generated {
                    code: Some(result.workspace.code),
                    graph: Some(graph),
                    error: result.error,
                    termination,
                },
                None => Generated {
                    termination,
                    ..Generated::failed(result.error.unwrap_or_else(|| "the episode saved no workflow".into()))
                },
            }
        }
    }
}

/// Generate, execute and judge one task.
pub fn run_task(env: &BenchEnv<'_>, strategy: Strategy, task: &Task) -> (RunRow, Vec<String>) {
    let main = Transcript::new();
    let gateway = env.llm.with_transcript(main.clone());
    let judge = env.judge.with_transcript(main.clone());
    let mut extra = Vec::new();
    let generated = generate(env, strategy, task, &gateway, &mut extra);

    let (outcome, message) = match &generated.graph {
        Some(graph) => {
            let outcome = env.backend.execute(graph);
            let message = outcome.message.clone();
            (Some(outcome), message)
        }
        None => (None, format!("no workflow: {}", generated.error.clone().unwrap_or_default())),
    };
    let verdict = outcome
        .as_ref()
        .map(|o| judge_resolve(task, o, &judge, &env.config.judge));
    let mut transcripts = extra;
    transcripts.push(main);
    let lines: Vec<String> = transcripts.iter().flat_map(|t| t.lines()).collect();
    let passed = outcome.as_ref().is_some_and(|o| o.passed);
    let row = RunRow {
        strategy,
        model: env.config.model.clone(),
        backend: env.backend.name().to_string(),
        task_id: task.id.clone(),
        category: task.category,
        modality: task.modality,
        code: generated.code,
        passed,
        resolved: passed && verdict.as_ref().is_some_and(|v| v.resolved),
        message,
        outputs: outcome.map(|o| o.outputs).unwrap_or_default(),
        judge_calls: verdict.as_ref().map_or(0, |v| v.calls),
        judge_analysis: verdict.as_ref().filter(|v| v.calls > 0).map(|v| v.analysis.clone()),
        error: verdict.and_then(|v| v.error).or(generated.error),
        termination: generated.termination,
        transcript_digest: combined_digest(&transcripts),
    };
    (row, lines)
}

fn write_transcript(dir: &Path, strategy: Strategy, task_id: &str, lines: &[String]) -> Result<(), BenchError> {
    let dir = dir.join(strategy.as_str());
    let path = dir.join(format!("{}.jsonl", sanitize(task_id)));
    let io = |source| BenchError::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(&dir).map_err(io)?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(&path, text).map_err(io)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Run `strategy` over `tasks`, skipping tasks the log already holds, and
/// return this strategy's rows in task order. Per-task failures become
/// rows; only log I/O aborts the run.
pub fn run_strategy(strategy: Strategy, tasks: &[Task], env: &BenchEnv<'_>, log: &RunLog) -> Result<Vec<RunRow>, BenchError> {
    if let Some(row) = log.rows().into_iter().find(|r| r.backend != env.backend.name()) {
        return Err(BenchError::MixedBackends {
            expected: row.backend,
            found: env.backend.name().to_string(),
        });
    }
    let pending: Vec<&Task> = tasks.iter().filter(|t| !log.contains(strategy, &t.id)).collect();
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<BenchError>> = Mutex::new(None);
    let workers = env.config.parallelism.max(1).min(pending.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = pending.get(i) else { break };
                if failure.lock().expect("failure lock").is_some() {
                    break;
                }
                let (row, lines) = run_task(env, strategy, task);
                let written = env
                    .transcript_dir
                    .map_or(Ok(()), |dir| write_transcript(dir, strategy, &task.id, &lines))
                    .and_then(|_| log.append(row));
                if let Err(e) = written {
                    failure.lock().expect("failure lock").get_or_insert(e);
                    break;
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    let rows = log.rows();
    Ok(tasks
        .iter()
        .filter_map(|t| rows.iter().find(|r| r.strategy == strategy && r.task_id == t.id).cloned())
        .collect())
}
