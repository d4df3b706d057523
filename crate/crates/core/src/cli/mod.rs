//! Command-line front end. `run` takes the arguments, an environment
//! lookup and output streams so it can be driven from tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::agent::{run_episode, AgentConfig, AgentContext, Termination};
use crate::bench::strategy::read_rows;
use crate::bench::{
    aggregate, load_tasks, run_strategy, Backend, BenchConfig, BenchEnv, BenchError, JudgeOptions, LiveBackend, RunLog,
    SimulatedBackend, Strategy, Task,
};
use crate::codec::{emit_code, lower, parse_code};
use crate::graph::{parse_prompt_json, parse_prompt_json_lenient, serialize_prompt_json, validate, WorkflowGraph};
use crate::knowledge::{ingest_corpus, EmbeddingCache, Embedder, HttpEmbedder, KnowledgeStore};
use crate::llm::{
    ChatProvider, Gateway, HttpProvider, OfflineLlm, RecordingProvider, ReplayProvider, RetryPolicy, ScriptedProvider,
};
use crate::schema::{ingest_docs, NodeSchemaRegistry};

pub mod config;

pub use config::{resolve, RunConfig, Secrets};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or unreadable input; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The command ran but the result is a failure; exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "flowsmith", version, about = "Convert, validate, generate and benchmark node-graph workflows")]
pub struct Cli {
    /// TOML file with settings (also FLOWSMITH_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run fully offline: rule-based LLM, hashing embedder, simulated backend.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Setting overrides; each matches a key of the config file.
#[derive(Debug, Default, Args, Serialize)]
pub struct Overrides {
    /// offline, script, replay or http.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_url: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_model: Option<String>,
    /// hash or http.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_url: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_model: Option<String>,
    /// simulated or live.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server_url: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poll_budget_secs: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<u32>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_attempts: Option<u32>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval_k: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demonstrations: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_votes: Option<u32>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Directory of node documents.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    /// Directory of annotated curriculum workflows.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// JSON-lines task manifest.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tasks: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// JSON array of responses for `--llm script`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script_file: Option<PathBuf>,
    /// Recordings for `--llm replay`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_dir: Option<PathBuf>,
    /// Record every LLM response to this directory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    JsonToCode,
    CodeToJson,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between prompt JSON and workflow code.
    Convert {
        input: PathBuf,
        /// Defaults to json-to-code for .json files, code-to-json otherwise.
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        /// Write here instead of stdout.
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Check a workflow (prompt JSON or code) against the registry.
    Validate { workflow: PathBuf },
    /// Run one agent episode.
    Agent {
        /// Task instruction; alternatively use --task with a manifest.
        instruction: Option<String>,
        /// Task id from the manifest given by --tasks.
        #[arg(long = "task")]
        task_id: Option<String>,
    },
    /// Run strategies over a task manifest and write the report.
    Bench {
        /// Comma-separated strategies, or "all".
        #[arg(long, value_delimiter = ',', default_value = "all")]
        strategies: Vec<String>,
        /// Task filter such as category=vanilla, modality=T2V or id=7; repeatable.
        #[arg(long)]
        filter: Vec<String>,
    },
    /// Aggregate run logs into a report.
    Report {
        /// Run-log files or directories; defaults to <output>/runs.
        logs: Vec<PathBuf>,
        /// Also write the CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the loaded node registry as JSON lines.
    RegistryDump,
}

/// Output streams of a command.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Parse arguments and run. Returns the process exit code.
pub fn run<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let mut io = Io { out, err };
    match execute(cli, env, &mut io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>, io: &mut Io<'_>) -> Result<(), CliError> {
    let Value::Object(mut flags) = serde_json::to_value(&cli.overrides).expect("overrides serialize") else {
        unreachable!("overrides are a struct")
    };
    if cli.dry_run {
        for (k, v) in [("llm", "offline"), ("embedder", "hash"), ("backend", "simulated")] {
            flags.insert(k.into(), Value::from(v));
        }
    }
    let config = resolve(cli.config.as_deref(), env, flags)?;
    let secrets = Secrets::from_env(env);
    match cli.command {
        Command::Convert { input, direction, out } => cmd_convert(&config, &input, direction, out.as_deref(), io),
        Command::Validate { workflow } => cmd_validate(&config, &workflow, io),
        Command::Agent { instruction, task_id } => cmd_agent(&config, &secrets, instruction, task_id, io),
        Command::Bench { strategies, filter } => cmd_bench(&config, &secrets, &strategies, &filter, io),
        Command::Report { logs, csv } => cmd_report(&config, &logs, csv.as_deref(), io),
        Command::RegistryDump => {
            let registry = load_registry(&config)?;
            write_out(io, &registry.dump_json_lines())?;
            let _ = writeln!(io.err, "{} classes, digest {}", registry.len(), registry.digest());
            Ok(())
        }
    }
}

fn write_out(io: &mut Io<'_>, text: &str) -> Result<(), CliError> {
    io.out
        .write_all(text.as_bytes())
        .and_then(|_| if text.ends_with('\n') || text.is_empty() { Ok(()) } else { io.out.write_all(b"\n") })
        .map_err(|e| CliError::Failed(format!("cannot write output: {e}")))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Failed(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

fn load_registry(config: &RunConfig) -> Result<NodeSchemaRegistry, CliError> {
    ingest_docs(&config.registry).map_err(|e| CliError::Usage(format!("registry: {e}")))
}

fn load_store(config: &RunConfig, registry: &NodeSchemaRegistry) -> Result<KnowledgeStore, CliError> {
    ingest_corpus(&config.corpus, registry).map_err(|e| CliError::Usage(format!("corpus: {e}")))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn graph_from_code(text: &[u8], path: &Path, registry: &NodeSchemaRegistry) -> Result<WorkflowGraph, CliError> {
    let text = std::str::from_utf8(text).map_err(|_| CliError::Usage(format!("{}: not UTF-8 text", path.display())))?;
    let script = parse_code(text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    lower(&script, registry).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn cmd_convert(
    config: &RunConfig,
    input: &Path,
    direction: Option<Direction>,
    out: Option<&Path>,
    io: &mut Io<'_>,
) -> Result<(), CliError> {
    let bytes = read_input(input)?;
    let registry = load_registry(config)?;
    let direction = direction.unwrap_or(if is_json(input) { Direction::JsonToCode } else { Direction::CodeToJson });
    let text = match direction {
        Direction::JsonToCode => {
            let graph = parse_prompt_json(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
            emit_code(&graph, &registry).map_err(|e| CliError::Failed(format!("{}: {e}", input.display())))?
        }
        Direction::CodeToJson => {
            let graph = graph_from_code(&bytes, input, &registry)?;
            let report = validate(&graph, &registry);
            if report.error_count() > 0 {
                return Err(CliError::Failed(format!("{}: workflow is invalid:\n{report}", input.display())));
            }
            String::from_utf8(serialize_prompt_json(&graph)).expect("prompt JSON is UTF-8")
        }
    };
    match out {
        Some(path) => write_file(path, format!("{}\n", text.trim_end()).as_bytes()),
        None => write_out(io, &text),
    }
}

pub fn cmd_validate(config: &RunConfig, workflow: &Path, io: &mut Io<'_>) -> Result<(), CliError> {
    let registry = load_registry(config)?;
    let bytes = read_input(workflow)?;
    let graph = if is_json(workflow) {
        parse_prompt_json_lenient(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", workflow.display())))?
    } else {
        graph_from_code(&bytes, workflow, &registry)?
    };
    let report = validate(&graph, &registry);
    write_out(io, &report.to_string())?;
    if report.error_count() > 0 {
        return Err(CliError::Failed(format!("{} is invalid", workflow.display())));
    }
    Ok(())
}

fn require_key<'a>(key: &'a Option<String>, name: &str, what: &str) -> Result<&'a str, CliError> {
    key.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{name} is not set; it is required for {what}")))
}

fn build_provider(config: &RunConfig, secrets: &Secrets) -> Result<Arc<dyn ChatProvider>, CliError> {
    let provider: Arc<dyn ChatProvider> = match config.llm.as_str() {
        "offline" => Arc::new(OfflineLlm),
        "script" => {
            let path = config
                .script_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--llm script needs --script-file".into()))?;
            Arc::new(ScriptedProvider::from_file(path).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        "replay" => {
            let dir = config
                .replay_dir
                .as_ref()
                .ok_or_else(|| CliError::Usage("--llm replay needs --replay-dir".into()))?;
            Arc::new(ReplayProvider::new(dir).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        _ => {
            let key = require_key(&secrets.api_key, "FLOWSMITH_API_KEY", "--llm http")?;
            Arc::new(
                HttpProvider::new(&config.llm_url, key, Duration::from_secs(300))
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
    };
    match &config.record_dir {
        Some(dir) => Ok(Arc::new(
            RecordingProvider::new(provider, dir)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?,
        )),
        None => Ok(provider),
    }
}

fn build_embedder(config: &RunConfig, secrets: &Secrets) -> Result<Embedder, CliError> {
    if config.embedder == "hash" {
        return Ok(Embedder::hashing());
    }
    let key = require_key(&secrets.embed_api_key, "FLOWSMITH_EMBED_API_KEY", "--embedder http")?;
    let provider = HttpEmbedder::new(&config.embed_url, key, &config.embed_model, None, Duration::from_secs(120))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cache = EmbeddingCache::open(config.output.join("embedding-cache")).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(Embedder::new(Arc::new(provider))
        .with_cache(cache)
        .with_retry(retry_policy(config)))
}

fn retry_policy(config: &RunConfig) -> RetryPolicy {
    if config.llm == "http" {
        RetryPolicy {
            attempts: config.retries,
            ..RetryPolicy::default()
        }
    } else {
        RetryPolicy::immediate(config.retries)
    }
}

fn agent_config(config: &RunConfig) -> AgentConfig {
    AgentConfig {
        model: config.model.clone(),
        step_budget: config.step_budget,
        refine_attempts: config.refine_attempts,
        retrieval_k: config.retrieval_k,
        ..AgentConfig::default()
    }
}

fn load_manifest(config: &RunConfig) -> Result<Vec<Task>, CliError> {
    let path = config
        .tasks
        .as_ref()
        .ok_or_else(|| CliError::Usage("no task manifest; pass --tasks".into()))?;
    load_tasks(path).map_err(|e| match e {
        BenchError::Io { .. } | BenchError::Manifest { .. } | BenchError::MissingAsset { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Failed(other.to_string()),
    })
}

pub fn cmd_agent(
    config: &RunConfig,
    secrets: &Secrets,
    instruction: Option<String>,
    task_id: Option<String>,
    io: &mut Io<'_>,
) -> Result<(), CliError> {
    let instruction = match (instruction, task_id) {
        (Some(text), None) => text,
        (None, Some(id)) => load_manifest(config)?
            .into_iter()
            .find(|t| t.id == id)
            .map(|t| t.instruction)
            .ok_or_else(|| CliError::Usage(format!("task {id:?} is not in the manifest")))?,
        _ => return Err(CliError::Usage("give either an instruction or --task".into())),
    };
    let provider = build_provider(config, secrets)?;
    let embedder = build_embedder(config, secrets)?;
    let registry = load_registry(config)?;
    let store = load_store(config, &registry)?;
    let gateway = Gateway::new(provider, retry_policy(config), config.parallelism);
    let agent = agent_config(config);
    let ctx = AgentContext {
        store: &store,
        registry: &registry,
        gateway: &gateway,
        embedder: &embedder,
        config: &agent,
    };
    let result = run_episode(&ctx, &instruction);

    let dir = &config.output;
    gateway
        .transcript()
        .write_jsonl(&dir.join("transcript.jsonl"))
        .or_else(|_| {
            fs::create_dir_all(dir)?;
            gateway.transcript().write_jsonl(&dir.join("transcript.jsonl"))
        })
        .map_err(|e| CliError::Failed(format!("cannot write transcript: {e}")))?;
    let json = serde_json::to_string_pretty(&result).expect("episode serializes");
    write_file(&dir.join("episode.json"), json.as_bytes())?;
    if let Some(graph) = &result.workflow {
        write_file(&dir.join("workflow.json"), &serialize_prompt_json(graph))?;
        write_file(&dir.join("workflow.py"), format!("{}\n", result.workspace.code).as_bytes())?;
    }

    let actions: Vec<&str> = result.actions().iter().map(|a| a.verb()).collect();
    let mut summary = format!(
        "terminated by: {}\nactions: {}\ntranscript digest: {}\n",
        serde_json::to_value(result.terminated_by).expect("termination serializes").as_str().unwrap_or_default(),
        actions.join(" -> "),
        result.transcript_digest,
    );
    if result.workflow.is_some() {
        summary.push_str(&format!("saved: {}\n", dir.join("workflow.json").display()));
    }
    write_out(io, &summary)?;
    match (result.terminated_by, result.error) {
        (Termination::FatalError, e) => Err(CliError::Failed(e.unwrap_or_else(|| "the episode failed".into()))),
        _ => Ok(()),
    }
}

fn parse_strategies(list: &[String]) -> Result<Vec<Strategy>, CliError> {
    if list.iter().any(|s| s == "all") {
        return Ok(Strategy::ALL.to_vec());
    }
    let mut out = Vec::new();
    for s in list {
        let s: Strategy = s.trim().parse().map_err(CliError::Usage)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

fn apply_filters(tasks: Vec<Task>, filters: &[String]) -> Result<Vec<Task>, CliError> {
    let mut tasks = tasks;
    for f in filters {
        let (key, value) = f
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("filter {f:?} is not key=value")))?;
        let keep: Box<dyn Fn(&Task) -> bool> = match key.trim() {
            "category" => {
                let c: crate::bench::Category = value.trim().parse().map_err(CliError::Usage)?;
                Box::new(move |t| t.category == c)
            }
            "modality" => {
                let m: crate::bench::Modality = value.trim().parse().map_err(CliError::Usage)?;
                Box::new(move |t| t.modality == m)
            }
            "id" => {
                let ids: Vec<String> = value.split('|').map(|s| s.trim().to_string()).collect();
                Box::new(move |t| ids.contains(&t.id))
            }
            other => return Err(CliError::Usage(format!("unknown filter key {other:?}; use category, modality or id"))),
        };
        tasks.retain(|t| keep(t));
    }
    Ok(tasks)
}

pub fn cmd_bench(
    config: &RunConfig,
    secrets: &Secrets,
    strategies: &[String],
    filters: &[String],
    io: &mut Io<'_>,
) -> Result<(), CliError> {
    let strategies = parse_strategies(strategies)?;
    let tasks = apply_filters(load_manifest(config)?, filters)?;
    let provider = build_provider(config, secrets)?;
    if config.llm == "http" {
        require_key(&secrets.judge_api_key, "FLOWSMITH_JUDGE_API_KEY", "judging with --llm http")?;
    }
    let embedder = build_embedder(config, secrets)?;
    let registry = load_registry(config)?;
    let store = load_store(config, &registry)?;
    let llm = Gateway::new(provider.clone(), retry_policy(config), config.parallelism);
    let judge = Gateway::new(provider, retry_policy(config), config.parallelism);
    let simulated;
    let live;
    let backend: &dyn Backend = if config.backend == "live" {
        live = LiveBackend::new(&config.server_url, Duration::from_secs(config.poll_budget_secs))
            .map_err(CliError::Usage)?;
        &live
    } else {
        simulated = SimulatedBackend::new(&registry);
        &simulated
    };
    let bench_config = BenchConfig {
        model: config.model.clone(),
        demonstrations: config.demonstrations,
        rag_k: config.retrieval_k,
        parallelism: config.parallelism,
        seed: config.seed,
        judge: JudgeOptions {
            model: config.judge_model.clone(),
            votes: config.judge_votes,
            ..JudgeOptions::default()
        },
        agent: agent_config(config),
        ..BenchConfig::default()
    };
    let transcripts = config.output.join("transcripts");
    let env = BenchEnv {
        store: &store,
        registry: &registry,
        embedder: &embedder,
        llm: &llm,
        judge: &judge,
        backend,
        config: &bench_config,
        transcript_dir: Some(&transcripts),
    };
    let mut rows = Vec::new();
    for strategy in strategies {
        let log = RunLog::open(config.output.join("runs").join(format!("{strategy}.jsonl")))
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let done = run_strategy(strategy, &tasks, &env, &log).map_err(|e| CliError::Failed(e.to_string()))?;
        let _ = writeln!(
            io.err,
            "{strategy}: {} task(s), {} passed, {} resolved",
            done.len(),
            done.iter().filter(|r| r.passed).count(),
            done.iter().filter(|r| r.resolved).count()
        );
        rows.extend(done);
    }
    write_report(&rows, &config.output, None, io)
}

fn write_report(rows: &[crate::bench::RunRow], dir: &Path, csv: Option<&Path>, io: &mut Io<'_>) -> Result<(), CliError> {
    let report = aggregate(rows).map_err(|e| CliError::Failed(e.to_string()))?;
    let markdown = report.to_markdown();
    write_file(&dir.join("report.md"), markdown.as_bytes())?;
    write_file(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_file(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?;
    if let Some(path) = csv {
        write_file(path, report.to_csv().as_bytes())?;
    }
    write_out(io, &format!("{markdown}\nreport digest: {}", report.digest()))
}

pub fn cmd_report(config: &RunConfig, logs: &[PathBuf], csv: Option<&Path>, io: &mut Io<'_>) -> Result<(), CliError> {
    let default = [config.output.join("runs")];
    let sources = if logs.is_empty() { &default[..] } else { logs };
    let mut files = Vec::new();
    for src in sources {
        if src.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(src)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", src.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else if src.is_file() {
            files.push(src.clone());
        } else {
            return Err(CliError::Usage(format!("{} does not exist", src.display())));
        }
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_rows(f).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    write_report(&rows, &config.output, csv, io)
}
