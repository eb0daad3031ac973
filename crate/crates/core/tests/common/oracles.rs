//! Brute-force reference implementations shared by the integration tests.
//! Each one recomputes its answer from definitions with plain loops and
//! shares no code with the library beyond its data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use marco::eda::report::{Aggressor, ClockEdges, Stage, TimingPath};
use marco::eda::{AnomalyKind, Check, TimingReport};
use marco::{TaskEdge, TaskGraph, TaskNode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `(kind, path, stage ref, measure)`, sorted.
pub type Finding = (AnomalyKind, String, String, f64);

pub fn sorted(mut v: Vec<Finding>) -> Vec<Finding> {
    v.sort_by(|a, b| (a.0, &a.1, &a.2).cmp(&(b.0, &b.1, &b.2)).then(a.3.total_cmp(&b.3)));
    v
}

pub fn pair(a: usize, b: usize) -> String {
    if a < b {
        format!("{a}+{b}")
    } else {
        format!("{b}+{a}")
    }
}

fn keep(path: &TimingPath, stage: &Stage, paths: Option<&[String]>, stages: Option<&[usize]>) -> bool {
    paths.map_or(true, |ps| ps.iter().any(|p| *p == path.path_id)) && stages.map_or(true, |ss| ss.contains(&stage.index))
}

/// Ratio test with the zero rules: `None` when nothing triggers.
fn over(num: f64, den: f64, thr: f64) -> Option<f64> {
    if den == 0.0 {
        return if num > 0.0 { Some(f64::MAX) } else { None };
    }
    let r = num / den;
    if r >= thr {
        Some(r)
    } else {
        None
    }
}

pub fn m1(report: &TimingReport) -> Vec<Finding> {
    let mut out = Vec::new();
    for p in &report.paths {
        if !p.clock_edges.rise && !p.clock_edges.fall {
            out.push((AnomalyKind::MissingClockEdge, p.path_id.clone(), "-".to_string(), p.slack));
        }
    }
    sorted(out)
}

pub fn m2(report: &TimingReport, thr: f64, paths: Option<&[String]>, stages: Option<&[usize]>) -> Vec<Finding> {
    let mut out = Vec::new();
    for p in &report.paths {
        for a in &p.stages {
            for b in &p.stages {
                if a.index >= b.index || !keep(p, a, paths, stages) || !keep(p, b, paths, stages) {
                    continue;
                }
                let r = over(a.resistance.max(b.resistance), a.resistance.min(b.resistance), thr);
                let c = over(a.capacitance.max(b.capacitance), a.capacitance.min(b.capacitance), thr);
                let m = match (r, c) {
                    (Some(x), Some(y)) => Some(if x > y { x } else { y }),
                    (x, y) => x.or(y),
                };
                if let Some(m) = m {
                    out.push((AnomalyKind::RcMismatch, p.path_id.clone(), pair(a.index, b.index), m));
                }
            }
        }
    }
    sorted(out)
}

pub fn m3(report: &TimingReport, thr: f64, paths: Option<&[String]>, stages: Option<&[usize]>) -> Vec<Finding> {
    let mut out = Vec::new();
    for p in &report.paths {
        for s in &p.stages {
            if !keep(p, s, paths, stages) {
                continue;
            }
            if let Some(m) = over(s.xtalk_delta, s.constraint, thr) {
                out.push((AnomalyKind::XtalkConstraint, p.path_id.clone(), s.index.to_string(), m));
            }
        }
    }
    sorted(out)
}

pub fn m4(report: &TimingReport, thr: f64) -> Vec<Finding> {
    let mut out = Vec::new();
    for p in &report.paths {
        for s in &p.stages {
            let mut best: Option<f64> = None;
            for a in &s.aggressors {
                if let Some(m) = over(a.coupling_cap, s.capacitance, thr) {
                    best = Some(best.map_or(m, |b| if m > b { m } else { b }));
                }
            }
            if let Some(m) = best {
                out.push((AnomalyKind::AggressorRc, p.path_id.clone(), s.index.to_string(), m));
            }
        }
    }
    sorted(out)
}

/// Ordered result: the first `k` stages of a full sort.
pub fn m5(report: &TimingReport, k: usize, min_delay: Option<f64>) -> Vec<Finding> {
    let mut all: Vec<(f64, f64, String, usize, f64)> = Vec::new();
    for p in &report.paths {
        for s in &p.stages {
            if min_delay.is_some_and(|d| s.delay < d) {
                continue;
            }
            all.push((s.delay, s.resistance * s.capacitance, p.path_id.clone(), s.index, s.constraint));
        }
    }
    // Selection sort keeps the comparison logic explicit.
    let mut out = Vec::new();
    while out.len() < k && !all.is_empty() {
        let mut best = 0;
        for i in 1..all.len() {
            let (a, b) = (&all[i], &all[best]);
            let better = a.0 > b.0
                || (a.0 == b.0 && a.1 > b.1)
                || (a.0 == b.0 && a.1 == b.1 && (a.2.as_str(), a.3) < (b.2.as_str(), b.3));
            if better {
                best = i;
            }
        }
        let s = all.remove(best);
        out.push((AnomalyKind::SlowStageConstraint, s.2, s.3.to_string(), s.4));
    }
    out
}

pub fn m6(a: &TimingReport, b: &TimingReport) -> Vec<Finding> {
    let mut out = Vec::new();
    let kind = AnomalyKind::TableMismatch;
    for pa in &a.paths {
        match b.paths.iter().find(|p| p.path_id == pa.path_id) {
            None => out.push((kind, pa.path_id.clone(), "-".into(), 0.0)),
            Some(pb) => {
                if pa.stages.len() != pb.stages.len() {
                    let d = (pa.stages.len() as f64 - pb.stages.len() as f64).abs();
                    out.push((kind, pa.path_id.clone(), "-".into(), d));
                }
                for i in 0..pa.stages.len().min(pb.stages.len()) {
                    let d = (pa.stages[i].delay - pb.stages[i].delay).abs();
                    if d > 1e-6 {
                        out.push((kind, pa.path_id.clone(), i.to_string(), d));
                    }
                }
                let d = (pa.slack - pb.slack).abs();
                if d > 1e-6 {
                    out.push((kind, pa.path_id.clone(), "-".into(), d));
                }
            }
        }
    }
    for pb in &b.paths {
        if !a.paths.iter().any(|p| p.path_id == pb.path_id) {
            out.push((kind, pb.path_id.clone(), "-".into(), 0.0));
        }
    }
    sorted(out)
}

/// A report with values drawn from small pools so ties, zeros and threshold
/// crossings all occur.
pub fn random_report(rng: &mut ChaCha8Rng, max_paths: usize, max_stages: usize) -> TimingReport {
    let pick = |rng: &mut ChaCha8Rng, pool: &[f64]| pool[rng.random_range(0..pool.len())];
    let n_paths = rng.random_range(1..=max_paths);
    let paths = (0..n_paths)
        .map(|p| {
            let n = rng.random_range(1..=max_stages);
            let stages = (0..n)
                .map(|i| Stage {
                    index: i,
                    net: format!("n{p}_{i}"),
                    cell: "BUFX1".into(),
                    resistance: pick(rng, &[0.0, 1.0, 2.5, 10.0, 12.0, 50.0, 100.0]),
                    capacitance: pick(rng, &[0.0, 0.5, 1.0, 1.2, 3.0, 8.0]),
                    delay: pick(rng, &[0.0, 0.01, 0.05, 0.1, 0.25, 0.6]),
                    constraint: pick(rng, &[0.0, 0.01, 0.02, 0.05]),
                    xtalk_delta: pick(rng, &[0.0, 0.005, 0.01, 0.04, 0.05, 0.2]),
                    aggressors: (0..rng.random_range(0..3))
                        .map(|k| Aggressor { net: format!("a{p}_{i}_{k}"), coupling_cap: pick(rng, &[0.0, 0.1, 1.0, 4.0, 10.0]) })
                        .collect(),
                })
                .collect();
            TimingPath {
                path_id: format!("p{p:02}"),
                startpoint: "s".into(),
                endpoint: "e".into(),
                clock_net: "clk".into(),
                clock_edges: [ClockEdges::NONE, ClockEdges::BOTH, ClockEdges { rise: true, fall: false }][rng.random_range(0..3)],
                slack: pick(rng, &[-0.3, -0.1, 0.0, 0.05, 0.2]),
                stages,
            }
        })
        .collect();
    TimingReport { corner: "tt".into(), mode: "func".into(), check: Check::Max, paths }
}

/// Position-based linear-extension check over execution edges.
pub fn is_linear_extension(order: &[String], graph: &TaskGraph) -> bool {
    let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos.len() != order.len() || pos.len() != graph.nodes.len() {
        return false;
    }
    graph.execution_edges().all(|e| match (pos.get(e.src.as_str()), pos.get(e.dst.as_str())) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    })
}

/// Not-done nodes whose every execution predecessor is done, found by
/// scanning all edges for each node.
pub fn frontier(graph: &TaskGraph, done: &BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = graph
        .nodes
        .iter()
        .filter(|n| !done.contains(&n.id))
        .filter(|n| graph.execution_edges().filter(|e| e.dst == n.id).all(|e| done.contains(&e.src)))
        .map(|n| n.id.clone())
        .collect();
    out.sort();
    out
}

/// Random DAG: edges only go from a lower to a higher position of a random
/// permutation, so the result is acyclic by construction.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> TaskGraph {
    let n = rng.random_range(0..=max_nodes);
    let mut ids: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let density = rng.random_range(0.0..0.5);
    let mut graph = TaskGraph::default();
    graph.nodes = ids.iter().map(|id| TaskNode::new(id.clone(), "agent")).collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                graph.edges.push(TaskEdge::execution(ids[i].clone(), ids[j].clone()));
            }
        }
    }
    graph
}

/// True when the execution edges contain a cycle (repeated removal of
/// nodes without incoming edges).
pub fn has_cycle(graph: &TaskGraph) -> bool {
    let mut left: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    loop {
        let free: Vec<&str> = left
            .iter()
            .copied()
            .filter(|id| !graph.execution_edges().any(|e| e.dst == *id && left.contains(e.src.as_str())))
            .collect();
        if free.is_empty() {
            return !left.is_empty();
        }
        for id in free {
            left.remove(id);
        }
    }
}

/// Lowercase alphanumeric runs, written character by character.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Naive tf-idf ranking over `(id, text)` documents: `(id, score)` by score
/// descending then id ascending, zero scores dropped, first `k` kept.
pub fn tfidf_rank(docs: &[(String, String)], query: &str, k: usize) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let doc_tokens: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokens(t)).collect();
    let mut scored = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let mut score = 0.0;
        for q in tokens(query) {
            let tf = doc_tokens[i].iter().filter(|t| **t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = doc_tokens.iter().filter(|d| d.contains(&q)).count() as f64;
            score += tf * (((n + 1.0) / (df + 1.0)).ln() + 1.0);
        }
        if score > 0.0 {
            scored.push((id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}
