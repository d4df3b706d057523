//! Acceptance suite. Runs as a plain binary and prints one line per
//! criterion; exits non-zero when any of them fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy as _, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowsmith::agent::{
    apply_refine, run_episode, AgentConfig, AgentContext, Candidate, EditFailure, EpisodeResult, StepOutcome, TaskBrief,
    Termination, Workspace,
};
use flowsmith::bench::{aggregate, agreement_stats, sample_frames, Category, Modality, RunRow, Strategy};
use flowsmith::codec::{emit_code, lower, parse_code};
use flowsmith::graph::{
    graph_equal, parse_prompt_json, topo_order, validate, InputValue, IssueCode, LinkRef, Literal, NodeId, NodeInstance,
    WorkflowGraph,
};
use flowsmith::knowledge::{ingest_corpus, retrieve, AnnotatedWorkflow, Embedder, KnowledgeStore};
use flowsmith::llm::{Gateway, RetryPolicy, ScriptedProvider};
use flowsmith::schema::{ingest_docs, NodeSchemaRegistry};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn data() -> &'static Path {
    Path::new(flowsmith::DATA_DIR)
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn registry() -> NodeSchemaRegistry {
    ingest_docs(&data().join("nodes")).expect("bundled registry loads")
}

fn corpus() -> Vec<(String, WorkflowGraph)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(data().join("curriculum"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, parse_prompt_json(&fs::read(&p).unwrap()).unwrap())
        })
        .collect()
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

// 1
fn roundtrip() -> Check {
    let registry = registry();
    let start = Instant::now();
    let corpus = corpus();
    ensure!(corpus.len() >= 20, "corpus has {} workflows", corpus.len());
    for (name, graph) in &corpus {
        let code = emit_code(graph, &registry).map_err(|e| format!("{name}: {e}"))?;
        let script = parse_code(&code).map_err(|e| format!("{name}: {e}"))?;
        let lowered = lower(&script, &registry).map_err(|e| format!("{name}: {e}"))?;
        ensure!(graph_equal(graph, &lowered), "{name}: lowered graph differs");
        let again = emit_code(&lowered, &registry).map_err(|e| format!("{name}: {e}"))?;
        ensure!(again == code, "{name}: code is not a fixpoint");
    }
    within(start, Duration::from_secs(5))
}

// 2
fn mutants(graph: &WorkflowGraph, registry: &NodeSchemaRegistry) -> Vec<(IssueCode, WorkflowGraph)> {
    let mut out = Vec::new();
    let ids: Vec<NodeId> = graph.nodes.keys().copied().collect();
    let bogus = NodeId::new(graph.max_id().unwrap().get() + 100).unwrap();
    let output_types = |id: NodeId| -> Vec<String> {
        registry
            .get(&graph.nodes[&id].class_name)
            .map(|s| s.outputs.iter().map(|o| o.type_name.clone()).collect())
            .unwrap_or_default()
    };

    for &id in &ids {
        let node = &graph.nodes[&id];
        let schema = registry.get(&node.class_name).unwrap();

        let mut g = graph.clone();
        g.nodes.get_mut(&id).unwrap().class_name = format!("Unheard_Of_{id}");
        out.push((IssueCode::UnknownClass, g));

        for spec in schema.inputs.iter().filter(|s| s.required && node.inputs.contains_key(&s.name)) {
            let mut g = graph.clone();
            g.nodes.get_mut(&id).unwrap().inputs.shift_remove(&spec.name);
            out.push((IssueCode::MissingInput, g));
        }

        let mut g = graph.clone();
        g.nodes.get_mut(&id).unwrap().inputs.insert("not_an_input".into(), Literal::Int(1).into());
        out.push((IssueCode::UnknownInput, g));

        for (input, link) in node.links() {
            let set = |value: LinkRef| {
                let mut g = graph.clone();
                g.nodes.get_mut(&id).unwrap().inputs[input] = InputValue::Link(value);
                g
            };
            out.push((IssueCode::DanglingLink, set(LinkRef { source: bogus, ..*link })));
            let slots = output_types(link.source).len() as u32;
            out.push((IssueCode::SlotOutOfRange, set(LinkRef { output_index: slots, ..*link })));

            let expected = &schema.input(input).unwrap().type_name;
            if expected != "*" {
                let wrong = ids.iter().filter(|&&s| s != id).find_map(|&s| {
                    output_types(s)
                        .iter()
                        .position(|t| t != expected && t != "*")
                        .map(|slot| LinkRef { source: s, output_index: slot as u32 })
                });
                if let Some(wrong) = wrong {
                    out.push((IssueCode::TypeMismatch, set(wrong)));
                }
            }

            // point an input of the producer back at this node
            let upstream = &graph.nodes[&link.source];
            if let Some((back, _)) = upstream.links().next() {
                let mut g = graph.clone();
                g.nodes.get_mut(&link.source).unwrap().inputs[back] =
                    InputValue::Link(LinkRef { source: id, output_index: 0 });
                out.push((IssueCode::Cycle, g));
            }
        }
    }
    out
}

fn mutation_kill() -> Check {
    let registry = registry();
    let start = Instant::now();
    let mut per_class: BTreeMap<IssueCode, (usize, usize)> = BTreeMap::new();
    for (name, graph) in corpus() {
        let report = validate(&graph, &registry);
        ensure!(report.error_count() == 0, "{name}: false positive:\n{report}");
        for (code, mutant) in mutants(&graph, &registry) {
            let report = validate(&mutant, &registry);
            let entry = per_class.entry(code).or_default();
            entry.0 += 1;
            if report.issues.iter().any(|i| i.code == code) {
                entry.1 += 1;
            } else {
                return Err(format!("{name}: {code} mutant survived:\n{report}"));
            }
        }
    }
    ensure!(per_class.len() == 7, "only {} mutation classes injected", per_class.len());
    within(start, Duration::from_secs(10))
}

// 3
fn random_dag(rng: &mut ChaCha8Rng) -> (WorkflowGraph, Vec<(NodeId, NodeId)>) {
    let n = rng.gen_range(1..=30);
    let mut pool: Vec<u32> = (1..=200).collect();
    pool.shuffle(rng);
    // pool order is the hidden order; edges only run forward in it
    let ids: Vec<NodeId> = pool[..n].iter().map(|&v| NodeId::new(v).unwrap()).collect();
    let mut graph = WorkflowGraph::new();
    let mut edges = Vec::new();
    for (j, &target) in ids.iter().enumerate() {
        let mut node = NodeInstance::new("N");
        for (i, &source) in ids[..j].iter().enumerate() {
            if rng.gen_bool(0.15) {
                node = node.with_link(format!("in{i}"), source, 0);
                edges.push((source, target));
            }
        }
        graph.insert(target, node);
    }
    (graph, edges)
}

fn topo_determinism() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (graph, edges) = random_dag(&mut rng);
        let order = topo_order(&graph).map_err(|e| format!("case {case}: {e}"))?;
        let mut sorted = order.clone();
        sorted.sort();
        let ids: Vec<NodeId> = graph.nodes.keys().copied().collect();
        ensure!(sorted == ids, "case {case}: not a permutation");
        let pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        for (s, t) in &edges {
            ensure!(pos[s] < pos[t], "case {case}: edge {s}->{t} reversed");
        }
        for _ in 0..2 {
            ensure!(topo_order(&graph).unwrap() == order, "case {case}: order changed between calls");
        }
    }
    within(start, Duration::from_secs(5))
}

// 4
const WORDS: &[&str] = &[
    "portrait", "landscape", "video", "upscale", "sketch", "canny", "depth", "anime", "mask", "repaint", "lora",
    "motion", "frames", "interpolate", "style", "blend", "noise", "latent", "sharp", "colour",
];

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn retrieval_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut items = Vec::new();
    for i in 0..20 {
        // every fourth item repeats the previous annotation, forcing ties
        let (function, principle) = if i % 4 == 3 {
            let prev: &AnnotatedWorkflow = &items[i - 1];
            (prev.function.clone(), prev.principle.clone())
        } else {
            let f = rng.gen_range(2..6);
            let p = rng.gen_range(2..6);
            (sentence(&mut rng, f), sentence(&mut rng, p))
        };
        items.push(AnnotatedWorkflow {
            name: format!("w{:02}", (i * 7) % 20),
            graph: WorkflowGraph::new(),
            code: String::new(),
            function,
            principle,
        });
    }
    let store = KnowledgeStore::from_workflows(items.clone()).map_err(|e| e.to_string())?;
    let embedder = Embedder::hashing();
    let vectors: Vec<(String, Vec<f64>)> = items
        .iter()
        .map(|w| (w.name.clone(), embedder.embed(&w.index_text()).unwrap().values))
        .collect();
    let mut ties = 0;
    for q in 0..100 {
        let len = rng.gen_range(1..5);
        let query = sentence(&mut rng, len);
        let k = rng.gen_range(1..=20);
        let qv = embedder.embed(&query).unwrap().values;
        let mut expected: Vec<(f64, &str)> = vectors.iter().map(|(n, v)| (oracle_cos(&qv, v), n.as_str())).collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        ties += expected.windows(2).filter(|w| w[0].0 == w[1].0).count();
        let expected: Vec<&str> = expected[..k].iter().map(|(_, n)| *n).collect();
        let got: Vec<&str> = retrieve(&store, &query, k, &embedder)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|h| h.workflow.name.as_str())
            .collect();
        ensure!(got == expected, "query {q} {query:?} k={k}: {got:?} != {expected:?}");
    }
    ensure!(ties > 0, "no ties were exercised");
    within(start, Duration::from_secs(5))
}

// 5
struct CliRun {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> CliRun {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = flowsmith::cli::run(std::iter::once("flowsmith").chain(args.iter().copied()), &|_| None, &mut out, &mut err);
    CliRun {
        code,
        out: String::from_utf8_lossy(&out).into_owned(),
        err: String::from_utf8_lossy(&err).into_owned(),
    }
}

fn line_value<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix))
}

fn replay_agent(replay: &str) -> Result<(EpisodeResult, String, PathBuf, tempfile::TempDir), String> {
    let instruction = fs::read_to_string(fixtures().join("fish/instruction.txt")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let replay = fixtures().join("fish").join(replay);
    let r = cli(&[
        "--llm",
        "replay",
        "--replay-dir",
        replay.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "agent",
        instruction.trim(),
    ]);
    ensure!(r.code == 0, "agent exited {}: {}", r.code, r.err);
    let digest = line_value(&r.out, "transcript digest: ").ok_or("no digest printed")?.to_string();
    let episode: EpisodeResult = serde_json::from_str(&fs::read_to_string(dir.path().join("episode.json")).unwrap())
        .map_err(|e| e.to_string())?;
    Ok((episode, digest, dir.path().to_path_buf(), dir))
}

fn verbs(e: &EpisodeResult) -> Vec<&str> {
    e.actions().iter().map(|a| a.verb()).collect()
}

fn rejections(e: &EpisodeResult) -> Vec<String> {
    e.steps
        .iter()
        .filter_map(|s| match &s.outcome {
            StepOutcome::Rejected { reason } => Some(reason.clone()),
            _ => None,
        })
        .collect()
}

fn fish_replay() -> Check {
    let registry = registry();
    let (episode, digest, dir, _keep) = replay_agent("replay")?;
    ensure!(episode.terminated_by == Termination::Finish, "terminated by {:?}", episode.terminated_by);
    ensure!(verbs(&episode) == ["load", "adapt", "combine", "finish"], "actions {:?}", verbs(&episode));
    let code = fs::read_to_string(dir.join("workflow.py")).unwrap();
    let graph = lower(&parse_code(&code).map_err(|e| e.to_string())?, &registry).map_err(|e| e.to_string())?;
    let report = validate(&graph, &registry);
    ensure!(report.error_count() == 0, "saved workflow is invalid:\n{report}");
    let rife = code.lines().find(|l| l.contains("RIFE_VFI(")).ok_or("no RIFE_VFI statement")?;
    ensure!(rife.contains("multiplier=3"), "RIFE_VFI statement: {rife}");
    let saved = parse_prompt_json(&fs::read(dir.join("workflow.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(graph_equal(&saved, &graph), "workflow.json and workflow.py disagree");
    let (_, again, _, _keep2) = replay_agent("replay")?;
    ensure!(again == digest, "digest changed between runs");

    let cases = [
        ("replay_combine_first", "the first action must load a reference workflow"),
        ("replay_adapt_twice", "adapt cannot follow adapt"),
        ("replay_unknown_name", "is not in the reference"),
    ];
    for (replay, reason) in cases {
        let (episode, digest, _, _keep) = replay_agent(replay)?;
        let rejected = rejections(&episode);
        ensure!(rejected.iter().any(|r| r.contains(reason)), "{replay}: rejections {rejected:?}");
        ensure!(episode.terminated_by == Termination::Finish, "{replay}: {:?}", episode.terminated_by);
        let (_, again, _, _keep2) = replay_agent(replay)?;
        ensure!(again == digest, "{replay}: digest changed between runs");
    }
    Ok(())
}

// 6
fn broken_code(store: &KnowledgeStore) -> String {
    store.get("text_to_image").unwrap().code.replacen("KSampler(", "KSamplerr(", 1)
}

fn refine_gate() -> Check {
    let registry = registry();
    let store = ingest_corpus(&data().join("curriculum"), &registry).map_err(|e| e.to_string())?;
    let embedder = Embedder::hashing();
    let good = store.get("text_to_image").unwrap().code.clone();
    let bad = broken_code(&store);
    let answer = |code: &str| format!("<code>\n{code}\n</code>\n<function>f</function>\n<principle>p</principle>");
    let task = TaskBrief {
        instruction: "draw a cat".into(),
        analysis: "one image".into(),
    };
    let candidate = Candidate {
        code: bad.clone(),
        function: "f".into(),
        principle: "p".into(),
    };
    let with = |provider: Arc<ScriptedProvider>, attempts: u32| {
        let gateway = Gateway::new(provider, RetryPolicy::immediate(1), 1);
        let config = AgentConfig::default();
        let ctx = AgentContext {
            store: &store,
            registry: &registry,
            gateway: &gateway,
            embedder: &embedder,
            config: &config,
        };
        apply_refine(&ctx, &[], &task, candidate.clone(), attempts)
    };

    // faulty, then fixed on the second refinement
    let provider = Arc::new(ScriptedProvider::new([answer(&bad), answer(&good)]));
    let ws = with(provider.clone(), 3).map_err(|e| e.to_string())?;
    ensure!(provider.requests().len() == 2, "{} refiner calls", provider.requests().len());
    ensure!(ws.code == good, "accepted workspace is not the canonical fixed code");

    // persistent failure
    for attempts in 1..=4 {
        let provider = Arc::new(ScriptedProvider::new(vec![answer(&bad); 8]));
        match with(provider.clone(), attempts) {
            Err(EditFailure::Rejected { refiner_calls, .. }) => {
                ensure!(refiner_calls == attempts, "reported {refiner_calls} calls for {attempts}")
            }
            other => return Err(format!("attempts {attempts}: {other:?}")),
        }
        ensure!(provider.requests().len() as u32 == attempts, "made {} calls for {attempts}", provider.requests().len());
    }

    // inside an episode the rejected adapt leaves the loaded workspace
    let plan = |action: &str| format!("<thought>t</thought>\n<plan>p</plan>\n<action>{action}</action>");
    let script = vec![
        "<analysis>one image</analysis>".to_string(),
        plan("load(name=\"text_to_image\")"),
        plan("adapt(prompt=\"make it a cat\")"),
        answer(&bad),
        answer(&bad),
        answer(&bad),
        plan("finish()"),
    ];
    let gateway = Gateway::new(Arc::new(ScriptedProvider::new(script)), RetryPolicy::immediate(1), 1);
    let config = AgentConfig {
        refine_attempts: 2,
        ..AgentConfig::default()
    };
    let ctx = AgentContext {
        store: &store,
        registry: &registry,
        gateway: &gateway,
        embedder: &embedder,
        config: &config,
    };
    let result = run_episode(&ctx, "draw a cat");
    let loaded = Workspace::from_workflow(store.get("text_to_image").unwrap());
    ensure!(
        matches!(result.steps[1].outcome, StepOutcome::Failed { .. }),
        "adapt outcome {:?}",
        result.steps[1].outcome
    );
    ensure!(result.workspace == loaded, "workspace changed after a rejection");
    ensure!(result.workspace.code != bad, "invalid candidate entered the workspace");
    let refines = gateway.transcript().lines().iter().filter(|l| l.contains("\"label\":\"refine\"")).count();
    ensure!(refines == 2, "{refines} refiner calls in the episode");
    let saved = result.workflow.as_ref().ok_or("no workflow saved")?;
    ensure!(graph_equal(saved, &store.get("text_to_image").unwrap().graph), "saved workflow is not the loaded one");
    Ok(())
}

// 7
fn row(i: usize, category: Category, passed: bool, resolved: bool) -> RunRow {
    RunRow {
        strategy: Strategy::ComfyAgent,
        model: "gpt-4o".into(),
        backend: "simulated".into(),
        task_id: format!("t{i:03}"),
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
    }
}

fn metrics() -> Check {
    let start = Instant::now();
    let rows: Vec<RunRow> = (0..200)
        .map(|i| row(i, Category::ALL[i % 3], i < 112, i < 65))
        .collect();
    let report = aggregate(&rows).map_err(|e| e.to_string())?;
    let table = report.to_markdown();
    let line = table.lines().find(|l| l.starts_with("| gpt-4o + ComfyAgent")).ok_or("no agent row")?;
    ensure!(line.ends_with("| 56.0 | 32.5 |"), "total cells: {line}");

    let mut runner = TestRunner::new(Config {
        cases: 1000,
        ..Config::default()
    });
    let logs = proptest::collection::vec((0usize..3, 0usize..6, proptest::bool::ANY, proptest::bool::ANY), 0..80);
    for _ in 0..1000 {
        let log: Vec<RunRow> = logs
            .new_tree(&mut runner)
            .map_err(|e| e.to_string())?
            .current()
            .into_iter()
            .enumerate()
            .map(|(i, (c, s, p, r))| RunRow {
                strategy: Strategy::ALL[s],
                ..row(i, Category::ALL[c], p, p && r)
            })
            .collect();
        let report = aggregate(&log).map_err(|e| e.to_string())?;
        for r in &report.rows {
            for cell in [&r.vanilla, &r.complex, &r.creative, &r.total] {
                ensure!(cell.resolved <= cell.passed && cell.passed <= cell.tasks, "cell {cell:?}");
            }
        }
    }
    within(start, Duration::from_secs(2))
}

// 8
fn frames() -> Check {
    let start = Instant::now();
    for n in 1..=100 {
        let idx = sample_frames(n, 10);
        ensure!(idx.len() == n.min(10), "n={n}: {} indices", idx.len());
        ensure!(idx.windows(2).all(|w| w[0] < w[1]), "n={n}: not increasing");
        ensure!(idx.iter().all(|&i| i < n), "n={n}: out of range");
        if n > 1 {
            ensure!(idx[0] == 0 && *idx.last().unwrap() == n - 1, "n={n}: endpoints {idx:?}");
        }
    }
    // i * 29 / 9 rounded for i in 0..10
    let expected = [0, 3, 6, 10, 13, 16, 19, 23, 26, 29];
    ensure!(sample_frames(30, 10) == expected, "n=30: {:?}", sample_frames(30, 10));
    within(start, Duration::from_secs(1))
}

// 9
fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let (mut c, mut d, mut ta, mut tb) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => {}
                (true, false) => ta += 1.0,
                (false, true) => tb += 1.0,
                _ if s > 0.0 => c += 1.0,
                _ => d += 1.0,
            }
        }
    }
    (c - d) / ((c + d + ta) * (c + d + tb)).sqrt()
}

fn agreement() -> Check {
    let start = Instant::now();
    // (a, b, tau, r, rho) with the scalars worked out by hand
    let cases: [(&[f64], &[f64], f64, f64, f64); 5] = [
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], 4.0 / 6.0, 0.8, 0.8),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0], 0.6, 0.8, 0.8),
        (&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], &[2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0], 0.160514, 0.209655, 0.198854),
        (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], -1.0, -1.0, -1.0),
        (&[2.5, 3.0, 1.0, 4.5, 4.0], &[3.0, 3.0, 1.0, 5.0, 4.0], 0.948683, 0.984732, 0.974679),
    ];
    for (i, (a, b, tau, r, rho)) in cases.iter().enumerate() {
        let s = agreement_stats(a, b).map_err(|e| e.to_string())?;
        let oracle = [
            oracle_tau_b(a, b),
            oracle_pearson(a, b),
            oracle_pearson(&oracle_ranks(a), &oracle_ranks(b)),
        ];
        let got = [s.kendall_tau.statistic, s.pearson_r.statistic, s.spearman_rho.statistic];
        for ((g, o), h) in got.iter().zip(oracle).zip([*tau, *r, *rho]) {
            ensure!((g - o).abs() < 1e-3 && (g - h).abs() < 1e-3, "case {i}: got {got:?}, oracle {oracle:?}");
        }
    }
    let v = [0.5, 1.5, 2.0, 7.0, 9.5];
    let s = agreement_stats(&v, &v).map_err(|e| e.to_string())?;
    let got = [s.kendall_tau.statistic, s.pearson_r.statistic, s.spearman_rho.statistic];
    ensure!(got.iter().all(|x| (x - 1.0).abs() < 1e-9), "identical inputs: {got:?}");
    within(start, Duration::from_secs(1))
}

// 10
fn offline_bench() -> Check {
    let start = Instant::now();
    let tasks = fixtures().join("bench/tasks.jsonl");
    let replay = fixtures().join("bench/replay");
    let mut digests = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let r = cli(&[
            "--llm",
            "replay",
            "--replay-dir",
            replay.to_str().unwrap(),
            "--backend",
            "simulated",
            "--tasks",
            tasks.to_str().unwrap(),
            "--output",
            dir.path().to_str().unwrap(),
            "bench",
        ]);
        ensure!(r.code == 0, "bench exited {}: {}", r.code, r.err);
        digests.push(line_value(&r.out, "report digest: ").ok_or("no digest printed")?.to_string());
        for s in Strategy::ALL {
            let log = fs::read_to_string(dir.path().join("runs").join(format!("{s}.jsonl"))).map_err(|e| e.to_string())?;
            ensure!(log.lines().count() == 5, "{s}: {} rows", log.lines().count());
            ensure!(r.out.contains(&format!("gpt-4o + {} |", s.label())), "{s} missing from the report");
        }
    }
    ensure!(digests[0] == digests[1], "digests differ: {digests:?}");
    within(start, Duration::from_secs(30))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("roundtrip and canonical fixpoint", roundtrip),
        ("validator mutation kill-rate", mutation_kill),
        ("topological determinism", topo_determinism),
        ("retrieval oracle equivalence", retrieval_oracle),
        ("fish episode replay and rule variants", fish_replay),
        ("refine gate", refine_gate),
        ("metrics arithmetic", metrics),
        ("frame sampling", frames),
        ("agreement statistics", agreement),
        ("offline end-to-end bench", offline_bench),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = start.elapsed().as_millis();
        match result {
            Ok(()) => println!("criterion {:>2} {name} ... PASS ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name} ... FAIL ({ms} ms): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
