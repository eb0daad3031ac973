//! Randomized property checks shared by the integration and acceptance
//! tests. Each returns a one-line summary or the first counterexample.
//! Expects the including crate to also declare `mod oracles`.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use marco::eda::fixtures::{M2_RATIO, M3_THRESHOLD, M4_THRESHOLD, M5_MIN_DELAY, M5_TOP_K};
use marco::eda::{
    aggressor_anomalies, compare_timing_tables, generate, key_multiset, missing_clock_edges, parse_timing_report,
    rc_mismatch_pairs, slowest_stage_constraints, AggressorCheck, Anomaly, AnomalyKey, FixtureSpec, StageFilter,
    TaskId,
};
use marco::engine::{self, default_catalog, BackendKind, RunConfig, RunOptions};
use marco::gateway::{canonical_hash, CompletionRequest};
use marco::graph::{apply_expansion, ready_frontier, Expansion, ExpansionRequest, GraphError, GraphMode};
use marco::memory::{Document, KnowledgeBase};
use marco::{TaskEdge, TaskGraph, TaskNode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::oracles::{self, Finding};

type Check = Result<String, String>;

fn findings(v: &[Anomaly]) -> Vec<Finding> {
    oracles::sorted(v.iter().map(|a| (a.kind, a.path_id.clone(), a.key().stage, a.measure)).collect())
}

fn expect<T: PartialEq + std::fmt::Debug>(got: T, want: T, what: impl Fn() -> String) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{}: got {got:?}, expected {want:?}", what()))
    }
}

fn m7(report: &marco::eda::TimingReport, paths: &[String], stages: &[usize]) -> Vec<Anomaly> {
    let filter = StageFilter::stages(stages.iter().copied()).with_paths(paths.iter().cloned());
    let mut v = rc_mismatch_pairs(report, M2_RATIO, &filter).unwrap();
    v.extend(aggressor_anomalies(report, AggressorCheck::Constraint, M3_THRESHOLD, &filter).unwrap());
    v
}

/// Every anomaly operation against the brute-force oracles on random
/// reports, and against the planted manifest on generated fixtures.
pub fn anomaly_equivalence(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = StageFilter::all();
    for case in 0..cases {
        let r = oracles::random_report(&mut rng, 10, 8);
        let thr = [1.5, 2.0, 3.0, 5.0, 10.0][rng.random_range(0..5)];
        let stages: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.5)).collect();
        let paths: Vec<String> = r.paths.iter().map(|p| p.path_id.clone()).filter(|_| rng.random_bool(0.6)).collect();
        let filter = StageFilter::stages(stages.clone()).with_paths(paths.clone());
        let k = rng.random_range(1..6);
        let min_delay = rng.random_bool(0.5).then(|| rng.random_range(0.0..0.5));
        let other = oracles::random_report(&mut rng, 10, 8);
        let at = |op: &str| format!("random case {case} {op}");

        expect(findings(&missing_clock_edges(&r).unwrap()), oracles::m1(&r), || at("M1"))?;
        expect(findings(&rc_mismatch_pairs(&r, thr, &all).unwrap()), oracles::m2(&r, thr, None, None), || at("M2"))?;
        expect(
            findings(&rc_mismatch_pairs(&r, thr, &filter).unwrap()),
            oracles::m2(&r, thr, Some(&paths), Some(&stages)),
            || at("M2 filtered"),
        )?;
        expect(
            findings(&aggressor_anomalies(&r, AggressorCheck::Constraint, thr, &filter).unwrap()),
            oracles::m3(&r, thr, Some(&paths), Some(&stages)),
            || at("M3"),
        )?;
        expect(findings(&aggressor_anomalies(&r, AggressorCheck::Rc, thr, &all).unwrap()), oracles::m4(&r, thr), || at("M4"))?;
        let got: Vec<Finding> = slowest_stage_constraints(&r, k, min_delay)
            .unwrap()
            .iter()
            .map(|a| (a.kind, a.path_id.clone(), a.key().stage, a.measure))
            .collect();
        expect(got, oracles::m5(&r, k, min_delay), || at("M5"))?;
        expect(findings(&compare_timing_tables(&r, &other).unwrap()), oracles::m6(&r, &other), || at("M6"))?;

        let spec = FixtureSpec {
            corners: rng.random_range(1..=3),
            paths: rng.random_range(1..=10),
            max_stages: rng.random_range(2..=8),
            seed: seed.wrapping_add(case as u64),
            clean: false,
        };
        let set = generate(&spec).map_err(|e| format!("{spec:?}: {e}"))?;
        let m = &set.manifest;
        let max = set.max_report();
        let planted = |t: TaskId| m.planted(t);
        let cmp = |t: TaskId, got: Vec<AnomalyKey>| expect(got, planted(t), || format!("{spec:?} {t}"));
        cmp(TaskId::M1, key_multiset(&missing_clock_edges(max).unwrap()))?;
        cmp(TaskId::M2, key_multiset(&rc_mismatch_pairs(max, M2_RATIO, &all).unwrap()))?;
        cmp(TaskId::M3, key_multiset(&aggressor_anomalies(max, AggressorCheck::Constraint, M3_THRESHOLD, &all).unwrap()))?;
        cmp(TaskId::M4, key_multiset(&aggressor_anomalies(max, AggressorCheck::Rc, M4_THRESHOLD, &all).unwrap()))?;
        cmp(TaskId::M5, key_multiset(&slowest_stage_constraints(max, M5_TOP_K, Some(M5_MIN_DELAY)).unwrap()))?;
        cmp(TaskId::M6, key_multiset(&compare_timing_tables(max, set.eco_report()).unwrap()))?;
        cmp(TaskId::M7, key_multiset(&m7(max, &m.m7_paths, &m.m7_stages)))?;
    }
    Ok(format!("{cases} random reports and {cases} generated fixtures agree with the oracles"))
}

/// No operation flags anything on a clean report.
pub fn clean_report_is_silent(text: &str) -> Check {
    let r = parse_timing_report(text).map_err(|e| e.to_string())?;
    let all = StageFilter::all();
    let every_path: Vec<String> = r.paths.iter().map(|p| p.path_id.clone()).collect();
    let counts = [
        missing_clock_edges(&r).unwrap().len(),
        rc_mismatch_pairs(&r, M2_RATIO, &all).unwrap().len(),
        aggressor_anomalies(&r, AggressorCheck::Constraint, M3_THRESHOLD, &all).unwrap().len(),
        aggressor_anomalies(&r, AggressorCheck::Rc, M4_THRESHOLD, &all).unwrap().len(),
        slowest_stage_constraints(&r, M5_TOP_K, Some(M5_MIN_DELAY)).unwrap().len(),
        compare_timing_tables(&r, &r).unwrap().len(),
        m7(&r, &every_path, &(0..16).collect::<Vec<_>>()).len(),
    ];
    if counts.iter().all(|&c| c == 0) {
        Ok(format!("{} clean paths, zero findings", r.paths.len()))
    } else {
        Err(format!("false positives per task: {counts:?}"))
    }
}

/// Config running every node of `graph` with a one-turn scripted agent.
pub fn scripted_config(dir: &Path, graph: &TaskGraph, replies: usize) -> RunConfig {
    let script = json!({"scripts": [{"match": "always", "responses": vec![json!({"role": "assistant", "content": "done"}); replies]}]});
    std::fs::write(dir.join("script.json"), script.to_string()).unwrap();
    let config = json!({
        "name": "scripted",
        "graph": graph,
        "agents": [{
            "name": "agent",
            "topology": "single",
            "roles": [{"name": "solo", "system_prompt": "Solve the task.", "model_ref": "mock"}],
            "termination": {"max_turns": 1}
        }],
        "backends": {"mock": {"kind": "mock", "script": "script.json"}},
        "limits": {"max_node_executions": graph.nodes.len().max(1) * 2}
    });
    RunConfig::from_json(&config.to_string(), dir, "scripted", &default_catalog()).unwrap_or_else(|e| panic!("{e}"))
}

/// Runs random DAGs through the engine in both modes; executed orders must
/// be linear extensions, and the deterministic order must follow the
/// frontier head at every step.
pub fn scheduler_orders(seed: u64, cases: usize, max_nodes: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let catalog = default_catalog();
    for case in 0..cases {
        let graph = oracles::random_dag(&mut rng, max_nodes);
        let config = scripted_config(dir.path(), &graph, graph.nodes.len());
        let mut expected = Vec::new();
        let mut done = BTreeSet::new();
        while let Some(head) = oracles::frontier(&graph, &done).first().cloned() {
            expected.push(head.clone());
            done.insert(head);
        }
        for deterministic in [true, false] {
            let options = RunOptions { deterministic, ..RunOptions::default() };
            let trace = engine::run(&config, &catalog, &options).map_err(|f| format!("case {case}: {}", f.error))?;
            let order: Vec<String> = trace.order().into_iter().map(String::from).collect();
            if order.len() != graph.nodes.len() || !oracles::is_linear_extension(&order, &graph) {
                return Err(format!("case {case}: {order:?} is not a linear extension"));
            }
            if deterministic {
                expect(&order, &expected, || format!("case {case} deterministic order"))?;
            }
            let mut done = BTreeSet::new();
            for id in &order {
                let ready = ready_frontier(&graph, &done).map_err(|e| e.to_string())?;
                expect(ready, oracles::frontier(&graph, &done), || format!("case {case} frontier"))?;
                done.insert(id.clone());
            }
        }
    }
    Ok(format!("{cases} random DAGs executed in linear-extension order"))
}

#[derive(Debug, PartialEq, Eq)]
enum Verdict {
    Applied,
    DuplicateNodeId,
    InvalidExpansion,
    CycleIntroduced,
}

fn oracle_verdict(graph: &TaskGraph, req: &ExpansionRequest) -> Verdict {
    let mut ids: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    if req.new_nodes.iter().any(|n| !ids.insert(n.id.as_str())) {
        return Verdict::DuplicateNodeId;
    }
    if req.new_edges.iter().any(|e| !ids.contains(e.src.as_str()) || !ids.contains(e.dst.as_str())) {
        return Verdict::InvalidExpansion;
    }
    let mut next = graph.clone();
    next.nodes.extend(req.new_nodes.iter().cloned());
    next.edges.extend(req.new_edges.iter().cloned());
    if oracles::has_cycle(&next) {
        return Verdict::CycleIntroduced;
    }
    // Reachability from the planner by repeated relaxation.
    let mut reach: BTreeSet<&str> = BTreeSet::new();
    let mut changed = true;
    while changed {
        changed = false;
        for e in next.execution_edges() {
            if (e.src == req.planner_id || reach.contains(e.src.as_str())) && reach.insert(e.dst.as_str()) {
                changed = true;
            }
        }
    }
    if req.new_nodes.iter().any(|n| !reach.contains(n.id.as_str())) {
        return Verdict::InvalidExpansion;
    }
    Verdict::Applied
}

/// Random expansion requests against random dynamic graphs: accepted ones
/// keep the graph acyclic, rejected ones raise the error the oracle predicts.
pub fn expansion_requests(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = [0usize; 4];
    for case in 0..cases {
        let mut graph = oracles::random_dag(&mut rng, 12);
        if graph.nodes.is_empty() {
            graph.nodes.push(TaskNode::new("n00", "agent"));
        }
        graph.mode = GraphMode::Dynamic;
        let p = rng.random_range(0..graph.nodes.len());
        graph.nodes[p].expansion = Expansion::Planner;
        graph.nodes[p].outputs = vec!["plan".into()];
        let planner = graph.nodes[p].id.clone();

        let existing: Vec<String> = graph.nodes.iter().map(|n| n.id.clone()).collect();
        let fresh = rng.random_range(1..=4);
        let mut new_nodes = Vec::new();
        for i in 0..fresh {
            let id = if rng.random_bool(0.08) { existing[rng.random_range(0..existing.len())].clone() } else { format!("x{i}") };
            new_nodes.push(TaskNode::new(id, "agent"));
        }
        let mut pool: Vec<String> = existing.clone();
        pool.extend(new_nodes.iter().map(|n| n.id.clone()));
        let mut new_edges: Vec<TaskEdge> = Vec::new();
        let mut push = |e: TaskEdge| {
            if e.src != e.dst && !new_edges.contains(&e) && !graph.edges.contains(&e) {
                new_edges.push(e);
            }
        };
        for n in &new_nodes {
            if rng.random_bool(0.9) {
                push(TaskEdge::execution(planner.clone(), n.id.clone()));
            }
        }
        for _ in 0..rng.random_range(0..4) {
            let a = pool[rng.random_range(0..pool.len())].clone();
            let b = pool[rng.random_range(0..pool.len())].clone();
            push(TaskEdge::execution(a, b));
        }
        if rng.random_bool(0.05) {
            push(TaskEdge::execution(planner.clone(), "ghost"));
        }
        let req = ExpansionRequest { planner_id: planner, new_nodes, new_edges };

        let want = oracle_verdict(&graph, &req);
        let got = match apply_expansion(&graph, &req) {
            Ok(next) => {
                if oracles::has_cycle(&next) || next.nodes.len() != graph.nodes.len() + req.new_nodes.len() {
                    return Err(format!("case {case}: accepted expansion broke the graph"));
                }
                Verdict::Applied
            }
            Err(GraphError::DuplicateNodeId(_)) => Verdict::DuplicateNodeId,
            Err(GraphError::CycleIntroduced { .. }) => Verdict::CycleIntroduced,
            Err(GraphError::InvalidExpansion(_)) => Verdict::InvalidExpansion,
            Err(e) => return Err(format!("case {case}: unexpected error {e}")),
        };
        tally[match got {
            Verdict::Applied => 0,
            Verdict::DuplicateNodeId => 1,
            Verdict::InvalidExpansion => 2,
            Verdict::CycleIntroduced => 3,
        }] += 1;
        expect(got, want, || format!("case {case} {req:?}"))?;
    }
    Ok(format!(
        "{cases} expansions: {} applied, {} duplicate ids, {} invalid, {} cycles",
        tally[0], tally[1], tally[2], tally[3]
    ))
}

const VOCAB: [&str; 16] = [
    "setup", "hold", "slack", "clock", "skew", "latch", "always", "reg", "wire", "port", "width", "net", "delay",
    "xtalk", "module", "corner",
];

fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    let seps = [" ", "  ", ", ", ". ", "\n", "-"];
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(seps[rng.random_range(0..seps.len())]);
        }
        let w = VOCAB[rng.random_range(0..VOCAB.len())];
        if rng.random_bool(0.15) {
            out.push_str(&w.to_uppercase());
        } else {
            out.push_str(w);
        }
    }
    out
}

/// Retrieval over random corpora of up to `max_docs` documents against the
/// naive tf-idf oracle, scores and tie-breaks included.
pub fn retrieval_pairs(seed: u64, cases: usize, max_docs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for case in 0..cases {
        let n = rng.random_range(0..=max_docs);
        let mut ids: Vec<String> = (0..n).map(|i| format!("doc{i:02}")).collect();
        ids.shuffle(&mut rng);
        let docs: Vec<(String, String)> = ids.into_iter().map(|id| (id, random_text(&mut rng, 12))).collect();
        let mut kb = KnowledgeBase::new("random");
        for (id, text) in &docs {
            kb.ingest(Document::new(id.clone(), text.clone())).map_err(|e| e.to_string())?;
        }
        let mut query = random_text(&mut rng, 4);
        if oracles::tokens(&query).is_empty() {
            query = VOCAB[rng.random_range(0..VOCAB.len())].to_string();
        }
        if rng.random_bool(0.1) {
            query.push_str(" unseenword");
        }
        let k = rng.random_range(1..=10);
        let got: Vec<(String, f64)> =
            kb.retrieve(&query, k).map_err(|e| e.to_string())?.iter().map(|h| (h.doc.id.clone(), h.score)).collect();
        hits += got.len();
        expect(got, oracles::tfidf_rank(&docs, &query, k), || format!("case {case} query {query:?}"))?;
    }
    Ok(format!("{cases} corpus/query pairs, {hits} ranked hits, all equal to the oracle"))
}

fn shuffled_json(value: &Value, rng: &mut ChaCha8Rng) -> String {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.shuffle(rng);
            let body: Vec<String> = entries
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), shuffled_json(v, rng)))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(|v| shuffled_json(v, rng)).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Re-serializes a request with every object's keys in random order and
/// checks that the request hash does not move.
pub fn hash_permutations(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let request = json!({
        "model_ref": "scripted",
        "temperature": 0.0,
        "messages": [
            {"role": "system", "content": "You run timing analyses."},
            {"role": "user", "content": "Task m2: RC mismatch pairs"},
            {"role": "assistant", "content": "Running.", "name": "analyst", "tool_calls": [
                {"id": "call_1", "tool_name": "rc_mismatch_pairs",
                 "arguments": {"report": "max_report", "ratio_threshold": 5, "save_as": "m2_findings", "paths": ["p002", "p003"], "stages": ["0", "4"]}}
            ]},
            {"role": "tool", "content": "5 pairs", "tool_call_id": "call_1"}
        ],
        "tool_specs": [{"name": "rc_mismatch_pairs", "description": "d", "params": [
            {"name": "report", "kind": "string", "required": true, "doc": "key"},
            {"name": "ratio_threshold", "kind": "number", "required": true, "doc": "ratio"}
        ]}]
    });
    let base: CompletionRequest = serde_json::from_value(request.clone()).map_err(|e| e.to_string())?;
    let want = canonical_hash(&base);
    let mut distinct_texts = BTreeSet::new();
    for case in 0..cases {
        let text = shuffled_json(&request, &mut rng);
        distinct_texts.insert(text.clone());
        let req: CompletionRequest = serde_json::from_str(&text).map_err(|e| format!("case {case}: {e}"))?;
        expect(canonical_hash(&req), want.clone(), || format!("case {case}"))?;
        let raw: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        expect(
            marco::gateway::canonical_value_string(&raw),
            marco::gateway::canonical_value_string(&request),
            || format!("case {case} canonical text"),
        )?;
    }
    Ok(format!("{cases} permutations ({} distinct texts), 0 mismatches", distinct_texts.len()))
}

/// Records a deterministic run into `cache`, replays it from the cache
/// alone, and compares the serialized traces byte for byte.
pub fn record_then_replay(config: &RunConfig, cache: &Path) -> Check {
    let catalog = default_catalog();
    fn fail(stage: &'static str) -> impl Fn(Box<engine::RunFailure>) -> String {
        move |f| format!("{stage}: {}", f.error)
    }
    let live = engine::run(config, &catalog, &RunOptions { deterministic: true, ..RunOptions::default() })
        .map_err(fail("direct run"))?;
    let recorded = engine::run(
        config,
        &catalog,
        &RunOptions { deterministic: true, record_dir: Some(cache.to_path_buf()), ..RunOptions::default() },
    )
    .map_err(fail("recording run"))?;
    let entries = std::fs::read_dir(cache).map_err(|e| e.to_string())?.count();
    let replayed = engine::run(
        config,
        &catalog,
        &RunOptions {
            deterministic: true,
            backend: Some(BackendKind::Replay),
            cache_dir: Some(cache.to_path_buf()),
            ..RunOptions::default()
        },
    )
    .map_err(fail("replay run"))?;
    let a = recorded.without_wall_clock().to_json();
    let b = replayed.without_wall_clock().to_json();
    if a != b {
        let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(0);
        return Err(format!("replayed trace differs from the recording at line {}", line + 1));
    }
    if live.without_wall_clock().to_json() != a {
        return Err("recording changed the trace".into());
    }
    Ok(format!("{} nodes, {entries} cached replies, {} trace bytes identical", replayed.nodes.len(), b.len()))
}
