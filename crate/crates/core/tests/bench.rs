use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowsmith::bench::strategy::run_task;
use flowsmith::bench::{
    aggregate, agreement_stats, judge_resolve, load_tasks, run_strategy, Artifact, Backend, BenchConfig, BenchEnv,
    Category, ExecutionOutcome, JudgeOptions, Modality, RunLog, SimulatedBackend, Strategy, Task,
};
use flowsmith::graph::{validate, NodeInstance};
use flowsmith::knowledge::{ingest_corpus, Embedder, KnowledgeStore};
use flowsmith::llm::{ChatProvider, Gateway, OfflineLlm, RecordingProvider, ReplayProvider, RetryPolicy, ScriptedProvider};
use flowsmith::schema::{ingest_docs, NodeSchemaRegistry};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn load() -> (NodeSchemaRegistry, KnowledgeStore) {
    let data = Path::new(flowsmith::DATA_DIR);
    let registry = ingest_docs(&data.join("nodes")).unwrap();
    let store = ingest_corpus(&data.join("curriculum"), &registry).unwrap();
    (registry, store)
}

fn gateway(provider: Arc<dyn ChatProvider>) -> Gateway {
    Gateway::new(provider, RetryPolicy::immediate(1), 4)
}

#[test]
fn judge_prompt_and_answer_from_the_ship_example() {
    let prompt = std::fs::read_to_string(fixtures().join("judge/prompt.txt")).unwrap();
    let answer = std::fs::read_to_string(fixtures().join("judge/answer.txt")).unwrap();
    let instruction = prompt
        .lines()
        .find_map(|l| l.strip_prefix("The task instruction is described as: "))
        .unwrap()
        .to_string();
    let task = Task {
        id: "ship".into(),
        instruction,
        category: Category::Complex,
        modality: Modality::T2I,
        assets: vec![],
    };
    let outcome = ExecutionOutcome {
        passed: true,
        outputs: vec![Artifact {
            node: 9,
            filename: "ship.png".into(),
            media_type: "image/png".into(),
            width: 512,
            height: 512,
            frame_count: 1,
            frame_rate: None,
            frames: vec![vec![0x89, b'P', b'N', b'G']],
        }],
        message: String::new(),
    };
    let provider = Arc::new(ScriptedProvider::new([answer.clone()]));
    let verdict = judge_resolve(&task, &outcome, &gateway(provider.clone()), &JudgeOptions::default());
    assert!(!verdict.resolved);
    assert_eq!(verdict.calls, 1);
    assert!(verdict.analysis.starts_with("There is a ship floating in the sea"));
    assert!(verdict.analysis.ends_with("shifted to the right side of the image."));
    let sent = provider.requests()[0].last_user_text();
    assert_eq!(sent, prompt.trim_end());
}

#[test]
fn simulated_pass_matches_validation_over_corpus() {
    let (registry, store) = load();
    let backend = SimulatedBackend::new(&registry);
    for w in store.iter() {
        let outcome = backend.execute(&w.graph);
        assert_eq!(outcome.passed, validate(&w.graph, &registry).error_count() == 0, "{}", w.name);
        assert!(!outcome.outputs.is_empty(), "{}", w.name);
        for a in &outcome.outputs {
            assert_eq!(a.frames.len() as u32, a.frame_count);
        }
        let mut broken = w.graph.clone();
        let first = *broken.nodes.keys().next().unwrap();
        broken.nodes.get_mut(&first).unwrap().class_name = "NoSuchNode".into();
        let outcome = backend.execute(&broken);
        assert!(!outcome.passed && outcome.outputs.is_empty());
        assert!(outcome.message.contains("NoSuchNode"));
    }
}

#[test]
fn simulated_metadata_follows_the_graph() {
    let (registry, store) = load();
    let backend = SimulatedBackend::new(&registry);
    let out = backend.execute(&store.get("video_frame_interpolation").unwrap().graph);
    let video = out.outputs.iter().find(|a| a.is_video()).unwrap();
    assert_eq!(video.frame_rate, Some(24.0));
    assert_eq!(video.frame_count % 3, 0);
    let out = backend.execute(&store.get("text_to_image").unwrap().graph);
    assert!(out.outputs.iter().all(|a| !a.is_video() && a.frame_count == 1));
}

#[test]
fn empty_graph_is_not_a_pass_of_nothing() {
    let (registry, _) = load();
    let mut g = flowsmith::graph::WorkflowGraph::new();
    g.insert(flowsmith::graph::NodeId::new(1).unwrap(), NodeInstance::new("Mystery"));
    let out = SimulatedBackend::new(&registry).execute(&g);
    assert!(!out.passed);
    assert!(out.message.contains("Mystery"));
}

fn env_parts() -> (NodeSchemaRegistry, KnowledgeStore, Embedder, BenchConfig) {
    let (registry, store) = load();
    (registry, store, Embedder::hashing(), BenchConfig::default())
}

fn bench_tasks() -> Vec<Task> {
    load_tasks(&fixtures().join("bench/tasks.jsonl")).unwrap()
}

#[test]
fn manifest_fixture_loads() {
    let tasks = bench_tasks();
    assert_eq!(tasks.len(), 5);
    assert_eq!(tasks.iter().filter(|t| t.category == Category::Vanilla).count(), 3);
    assert_eq!(tasks[1].assets[0].filename, "street_car.png");
}

#[test]
fn unparseable_answer_fails_the_task_only() {
    let (registry, store, embedder, config) = env_parts();
    let llm = gateway(Arc::new(ScriptedProvider::new(["I would use some nodes.", "<code>\n= =\n</code>"])));
    let judge = gateway(Arc::new(OfflineLlm));
    let backend = SimulatedBackend::new(&registry);
    let config = BenchConfig { parallelism: 1, ..config };
    let env = BenchEnv {
        store: &store,
        registry: &registry,
        embedder: &embedder,
        llm: &llm,
        judge: &judge,
        backend: &backend,
        config: &config,
        transcript_dir: None,
    };
    let tasks = &bench_tasks()[..2];
    let rows = run_strategy(Strategy::ZeroShot, tasks, &env, &RunLog::in_memory()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r.passed && !r.resolved && r.judge_calls == 0));
    assert!(rows[0].error.as_deref().unwrap().contains("<code>"));
}

#[test]
fn unanimous_trajectories_win() {
    let (registry, store, embedder, config) = env_parts();
    let code = store.get("text_to_image").unwrap().code.clone();
    let answer = format!("<thought>\nsame\n</thought>\n\n<code>\n{code}\n</code>");
    let llm = gateway(Arc::new(ScriptedProvider::new([answer.clone(), answer.clone(), answer])));
    let judge = gateway(Arc::new(ScriptedProvider::new(["<analysis>fine</analysis><judgment>True</judgment>"])));
    let backend = SimulatedBackend::new(&registry);
    let env = BenchEnv {
        store: &store,
        registry: &registry,
        embedder: &embedder,
        llm: &llm,
        judge: &judge,
        backend: &backend,
        config: &config,
        transcript_dir: None,
    };
    let (row, lines) = run_task(&env, Strategy::CotSc, &bench_tasks()[0]);
    assert_eq!(row.code.as_deref(), Some(code.as_str()));
    assert!(row.passed && row.resolved);
    assert_eq!(row.judge_calls, 1);
    assert_eq!(lines.len(), 4);
}

#[test]
fn rag_replay_is_deterministic() {
    let (registry, store, embedder, config) = env_parts();
    let tasks: Vec<Task> = bench_tasks().into_iter().take(3).collect();
    let dir = tempfile::tempdir().unwrap();
    let run = |provider: Arc<dyn ChatProvider>| {
        let llm = gateway(provider.clone());
        let judge = gateway(provider);
        let backend = SimulatedBackend::new(&registry);
        let env = BenchEnv {
            store: &store,
            registry: &registry,
            embedder: &embedder,
            llm: &llm,
            judge: &judge,
            backend: &backend,
            config: &config,
            transcript_dir: None,
        };
        let rows = run_strategy(Strategy::Rag, &tasks, &env, &RunLog::in_memory()).unwrap();
        aggregate(&rows).unwrap()
    };
    let recorded = run(Arc::new(RecordingProvider::new(Arc::new(OfflineLlm), dir.path()).unwrap()));
    let first = run(Arc::new(ReplayProvider::new(dir.path()).unwrap()));
    let second = run(Arc::new(ReplayProvider::new(dir.path()).unwrap()));
    assert_eq!(first.tasks.len(), 3);
    assert_eq!(first.digest(), second.digest());
    assert_eq!(first.digest(), recorded.digest());
    for r in &first.tasks {
        assert!(!r.resolved || r.passed);
        assert_eq!(r.judge_calls, u32::from(r.passed));
    }
}

#[test]
fn run_log_resumes_without_duplicates() {
    let (registry, store, embedder, config) = env_parts();
    let llm = gateway(Arc::new(OfflineLlm));
    let backend = SimulatedBackend::new(&registry);
    let env = BenchEnv {
        store: &store,
        registry: &registry,
        embedder: &embedder,
        llm: &llm,
        judge: &llm,
        backend: &backend,
        config: &config,
        transcript_dir: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs/few-shot.jsonl");
    let tasks = bench_tasks();
    run_strategy(Strategy::FewShot, &tasks[..2], &env, &RunLog::open(&path).unwrap()).unwrap();
    let rows = run_strategy(Strategy::FewShot, &tasks, &env, &RunLog::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn report_examples() {
    let row = |id: usize, category, passed, resolved| flowsmith::bench::RunRow {
        strategy: Strategy::ComfyAgent,
        model: "gpt-4o".into(),
        backend: "simulated".into(),
        task_id: id.to_string(),
        category,
        modality: Modality::T2I,
        code: None,
        passed,
        resolved,
        message: String::new(),
        outputs: vec![],
        judge_calls: u32::from(passed),
        judge_analysis: None,
        error: None,
        termination: None,
        transcript_digest: String::new(),
    };
    let one = aggregate(&[row(0, Category::Vanilla, true, true)]).unwrap();
    assert!(one.to_markdown().contains("| gpt-4o + ComfyAgent | 100.0 | 100.0 | - | - | - | - | 100.0 | 100.0 |"));

    // hand-built 10 tasks: vanilla 4 (3 pass, 1 resolve), complex 3 (2, 2), creative 3 (0, 0)
    let spec = [
        (Category::Vanilla, true, true),
        (Category::Vanilla, true, false),
        (Category::Vanilla, true, false),
        (Category::Vanilla, false, false),
        (Category::Complex, true, true),
        (Category::Complex, true, true),
        (Category::Complex, false, false),
        (Category::Creative, false, false),
        (Category::Creative, false, false),
        (Category::Creative, false, false),
    ];
    let rows: Vec<_> = spec.iter().enumerate().map(|(i, (c, p, r))| row(i, *c, *p, *r)).collect();
    let report = aggregate(&rows).unwrap();
    let r = &report.rows[0];
    assert_eq!((r.vanilla.pass_rate().unwrap(), r.vanilla.resolve_rate().unwrap()), ("75.0".into(), "25.0".into()));
    assert_eq!((r.complex.pass_rate().unwrap(), r.complex.resolve_rate().unwrap()), ("66.7".into(), "66.7".into()));
    assert_eq!((r.creative.pass_rate().unwrap(), r.creative.resolve_rate().unwrap()), ("0.0".into(), "0.0".into()));
    assert_eq!((r.total.pass_rate().unwrap(), r.total.resolve_rate().unwrap()), ("50.0".into(), "30.0".into()));
    assert!(report.to_csv().lines().nth(1).unwrap().starts_with("gpt-4o + ComfyAgent,gpt-4o,comfyagent,4,3,1,75.0,25.0"));
}

#[test]
fn agreement_examples() {
    let inc = [1.0, 2.0, 3.0, 4.0, 5.0];
    let dec = [5.0, 4.0, 3.0, 2.0, 1.0];
    let s = agreement_stats(&inc, &inc).unwrap();
    assert_eq!([s.kendall_tau.statistic, s.pearson_r.statistic, s.spearman_rho.statistic].map(|x| (x * 1e9).round()), [1e9; 3]);
    let s = agreement_stats(&inc, &dec).unwrap();
    assert!([s.kendall_tau.statistic, s.pearson_r.statistic, s.spearman_rho.statistic].iter().all(|x| (x + 1.0).abs() < 1e-9));

    // one discordant pair out of six
    let s = agreement_stats(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((s.kendall_tau.statistic - 4.0 / 6.0).abs() < 1e-3);
    // Pearson: deviations (-1.5,-0.5,0.5,1.5) both ways, products sum 4, norms 5
    assert!((s.pearson_r.statistic - 0.8).abs() < 1e-3);
    // Spearman: sum d^2 = 2, 1 - 6*2/(4*15)
    assert!((s.spearman_rho.statistic - 0.8).abs() < 1e-3);
    assert!(agreement_stats(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(agreement_stats(&[1.0, 2.0], &[1.0, 2.0]).is_err());
}
