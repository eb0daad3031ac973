//! Task graphs: sub-task nodes joined by execution and knowledge edges.
//!
//! Execution edges order work and must form a DAG. Knowledge edges describe
//! which blackboard key flows from one node to another; they never constrain
//! scheduling. Graph values are immutable once built: expansion returns a new
//! graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    #[default]
    None,
    /// May emit an [`ExpansionRequest`] through a `PLAN` block.
    Planner,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct TaskNode {
    pub id: String,
    pub title: String,
    /// Prompt text handed to the node's agent.
    pub goal: String,
    /// Name of the agent configuration that solves this node.
    pub agent_ref: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub expansion: Expansion,
}

impl TaskNode {
    pub fn new(id: impl Into<String>, agent_ref: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            title: id.clone(),
            goal: String::new(),
            id,
            agent_ref: agent_ref.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            expansion: Expansion::None,
        }
    }

    pub fn with_goal(mut self, goal: impl Into<String>) -> Self {
        self.goal = goal.into();
        self
    }

    pub fn with_io(mut self, inputs: &[&str], outputs: &[&str]) -> Self {
        self.inputs = inputs.iter().map(|s| s.to_string()).collect();
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn planner(mut self) -> Self {
        self.expansion = Expansion::Planner;
        self
    }

    pub fn is_planner(&self) -> bool {
        self.expansion == Expansion::Planner
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Execution,
    Knowledge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct TaskEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    /// Blackboard key carried by a knowledge edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl TaskEdge {
    pub fn execution(src: impl Into<String>, dst: impl Into<String>) -> Self {
        Self { src: src.into(), dst: dst.into(), kind: EdgeKind::Execution, key: None }
    }

    pub fn knowledge(src: impl Into<String>, dst: impl Into<String>, key: impl Into<String>) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            kind: EdgeKind::Knowledge,
            key: Some(key.into()),
        }
    }

    fn sort_key(&self) -> (&str, &str, EdgeKind, Option<&str>) {
        (&self.src, &self.dst, self.kind, self.key.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    #[default]
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
pub struct TaskGraph {
    #[serde(default)]
    pub mode: GraphMode,
    #[serde(default)]
    pub nodes: Vec<TaskNode>,
    #[serde(default)]
    pub edges: Vec<TaskEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ExpansionRequest {
    pub planner_id: String,
    pub new_nodes: Vec<TaskNode>,
    pub new_edges: Vec<TaskEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    DuplicateNodeId,
    EmptyKey,
    PlannerWithoutOutput,
    SelfLoop,
    UnknownEndpoint,
    MissingEdgeKey,
    UnexpectedEdgeKey,
    DanglingKey,
    DuplicateEdge,
    Cycle,
    StaticWithPlanner,
    DynamicWithoutPlanner,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().unwrap_or("UNKNOWN"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Node id, or `src->dst` for edges.
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.code, self.subject, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("NOT_PREFIX_CLOSED: {node} is done but its predecessor {pred} is not")]
    NotPrefixClosed { node: String, pred: String },
    #[error("UNKNOWN_NODE: {0}")]
    UnknownNode(String),
    #[error("CYCLE_INTRODUCED: expansion from {planner} closes a cycle through {nodes:?}")]
    CycleIntroduced { planner: String, nodes: Vec<String> },
    #[error("UNKNOWN_PLANNER: {0} is not a planner node of a dynamic graph")]
    UnknownPlanner(String),
    #[error("DUPLICATE_NODE_ID: {0}")]
    DuplicateNodeId(String),
    #[error("INVALID_EXPANSION: {0}")]
    InvalidExpansion(String),
    #[error("INVALID_GRAPH: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
}

impl TaskGraph {
    pub fn new(mode: GraphMode) -> Self {
        Self { mode, nodes: Vec::new(), edges: Vec::new() }
    }

    pub fn node(&self, id: &str) -> Option<&TaskNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_ids(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    pub fn execution_edges(&self) -> impl Iterator<Item = &TaskEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Execution)
    }

    /// Execution predecessors of every node (including nodes without any).
    pub fn predecessors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut preds: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.iter().map(|n| (n.id.as_str(), BTreeSet::new())).collect();
        for e in self.execution_edges() {
            if let Some(p) = preds.get_mut(e.dst.as_str()) {
                p.insert(e.src.as_str());
            }
        }
        preds
    }

    pub fn validate(&self) -> ValidationReport {
        validate_graph(self)
    }
}

/// Checks every node, edge and graph invariant and lists each failure.
pub fn validate_graph(graph: &TaskGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |code, subject: &str, detail: String| {
        violations.push(Violation { code, subject: subject.to_string(), detail });
    };

    let mut by_id: BTreeMap<&str, &TaskNode> = BTreeMap::new();
    for node in &graph.nodes {
        if node.id.is_empty() {
            push(ViolationCode::EmptyId, "", "node id is empty".into());
        }
        if by_id.insert(node.id.as_str(), node).is_some() {
            push(ViolationCode::DuplicateNodeId, &node.id, "node id appears more than once".into());
        }
        if node.inputs.iter().chain(&node.outputs).any(|k| k.is_empty()) {
            push(ViolationCode::EmptyKey, &node.id, "inputs and outputs must be non-empty strings".into());
        }
        if node.is_planner() && node.outputs.is_empty() {
            push(
                ViolationCode::PlannerWithoutOutput,
                &node.id,
                "planner nodes must declare an output key for their plan".into(),
            );
        }
    }

    let mut seen_edges = BTreeSet::new();
    for edge in &graph.edges {
        let subject = format!("{}->{}", edge.src, edge.dst);
        if !seen_edges.insert(edge.sort_key()) {
            push(ViolationCode::DuplicateEdge, &subject, "edge listed more than once".into());
        }
        if edge.src == edge.dst {
            push(ViolationCode::SelfLoop, &subject, "edge endpoints must differ".into());
        }
        let src = by_id.get(edge.src.as_str());
        let dst = by_id.get(edge.dst.as_str());
        for (end, found) in [(&edge.src, src.is_some()), (&edge.dst, dst.is_some())] {
            if !found {
                push(ViolationCode::UnknownEndpoint, &subject, format!("no node named {end:?}"));
            }
        }
        match (edge.kind, &edge.key) {
            (EdgeKind::Execution, Some(key)) => push(
                ViolationCode::UnexpectedEdgeKey,
                &subject,
                format!("execution edge carries key {key:?}"),
            ),
            (EdgeKind::Knowledge, None) => {
                push(ViolationCode::MissingEdgeKey, &subject, "knowledge edge without key".into())
            }
            (EdgeKind::Knowledge, Some(key)) => {
                if let Some(src) = src {
                    if !src.outputs.contains(key) {
                        push(
                            ViolationCode::DanglingKey,
                            &subject,
                            format!("key {key:?} is not an output of {}", src.id),
                        );
                    }
                }
                if let Some(dst) = dst {
                    if !dst.inputs.contains(key) {
                        push(
                            ViolationCode::DanglingKey,
                            &subject,
                            format!("key {key:?} is not an input of {}", dst.id),
                        );
                    }
                }
            }
            (EdgeKind::Execution, None) => {}
        }
    }

    let cyclic = cyclic_nodes(graph);
    if !cyclic.is_empty() {
        push(
            ViolationCode::Cycle,
            &cyclic.join(","),
            "execution edges do not form a DAG".into(),
        );
    }

    let planners = graph.nodes.iter().filter(|n| n.is_planner()).count();
    match graph.mode {
        GraphMode::Static if planners > 0 => push(
            ViolationCode::StaticWithPlanner,
            "",
            format!("static graph contains {planners} planner node(s)"),
        ),
        GraphMode::Dynamic if planners == 0 => push(
            ViolationCode::DynamicWithoutPlanner,
            "",
            "dynamic graph has no planner node".into(),
        ),
        _ => {}
    }

    ValidationReport { ok: violations.is_empty(), violations }
}

/// Nodes left over after Kahn's algorithm on execution edges, i.e. nodes on
/// or downstream of a cycle. Sorted by id.
fn cyclic_nodes(graph: &TaskGraph) -> Vec<String> {
    let ids = graph.node_ids();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in graph.execution_edges() {
        if ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()) {
            *indegree.get_mut(e.dst.as_str()).unwrap() += 1;
            succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
        }
    }
    let mut queue: VecDeque<&str> =
        indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    while let Some(id) = queue.pop_front() {
        for next in succ.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(next);
            }
        }
    }
    indegree.into_iter().filter(|(_, d)| *d > 0).map(|(id, _)| id.to_string()).collect()
}

/// Every not-done node whose execution predecessors are all done, sorted by id.
pub fn ready_frontier(graph: &TaskGraph, done: &BTreeSet<String>) -> Result<Vec<String>, GraphError> {
    let preds = graph.predecessors();
    for id in done {
        let p = preds.get(id.as_str()).ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
        if let Some(missing) = p.iter().find(|p| !done.contains(**p)) {
            return Err(GraphError::NotPrefixClosed { node: id.clone(), pred: missing.to_string() });
        }
    }
    Ok(preds
        .into_iter()
        .filter(|(id, p)| !done.contains(*id) && p.iter().all(|p| done.contains(*p)))
        .map(|(id, _)| id.to_string())
        .collect())
}

/// Applies a planner's expansion, returning a new graph.
pub fn apply_expansion(graph: &TaskGraph, req: &ExpansionRequest) -> Result<TaskGraph, GraphError> {
    let planner_ok = graph.mode == GraphMode::Dynamic
        && graph.node(&req.planner_id).is_some_and(TaskNode::is_planner);
    if !planner_ok {
        return Err(GraphError::UnknownPlanner(req.planner_id.clone()));
    }

    let mut ids: BTreeSet<&str> = graph.node_ids();
    for n in &req.new_nodes {
        if !ids.insert(n.id.as_str()) {
            return Err(GraphError::DuplicateNodeId(n.id.clone()));
        }
    }
    for e in &req.new_edges {
        for end in [&e.src, &e.dst] {
            if !ids.contains(end.as_str()) {
                return Err(GraphError::InvalidExpansion(format!(
                    "edge {}->{} names unknown node {end:?}",
                    e.src, e.dst
                )));
            }
        }
    }

    let mut next = graph.clone();
    next.nodes.extend(req.new_nodes.iter().cloned());
    next.edges.extend(req.new_edges.iter().cloned());

    let cyclic = cyclic_nodes(&next);
    if !cyclic.is_empty() {
        return Err(GraphError::CycleIntroduced { planner: req.planner_id.clone(), nodes: cyclic });
    }

    let reachable = execution_descendants(&next, &req.planner_id);
    if let Some(orphan) = req.new_nodes.iter().find(|n| !reachable.contains(n.id.as_str())) {
        return Err(GraphError::InvalidExpansion(format!(
            "new node {} is not reachable from planner {}",
            orphan.id, req.planner_id
        )));
    }

    let report = validate_graph(&next);
    if !report.ok {
        return Err(GraphError::InvalidExpansion(
            report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(next)
}

fn execution_descendants<'a>(graph: &'a TaskGraph, root: &str) -> BTreeSet<&'a str> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in graph.execution_edges() {
        succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
    }
    let mut seen = BTreeSet::new();
    let mut stack: Vec<&str> = succ.get(root).cloned().unwrap_or_default();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            stack.extend(succ.get(id).into_iter().flatten());
        }
    }
    seen
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders a DOT digraph. Nodes and edges are sorted, so output is
/// byte-deterministic. Knowledge edges are dashed and labelled with their key.
pub fn export_dot(graph: &TaskGraph) -> Result<String, GraphError> {
    let report = validate_graph(graph);
    if !report.ok {
        return Err(GraphError::InvalidGraph(report.violations));
    }
    let mut nodes: Vec<&TaskNode> = graph.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut edges: Vec<&TaskEdge> = graph.edges.iter().collect();
    edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut out = String::from("digraph marco {\n");
    for n in nodes {
        let shape = if n.is_planner() { ", shape=diamond" } else { "" };
        let _ = writeln!(out, "  {} [label={}{}];", dot_quote(&n.id), dot_quote(&n.title), shape);
    }
    for e in edges {
        match (&e.kind, &e.key) {
            (EdgeKind::Knowledge, Some(key)) => {
                let _ = writeln!(
                    out,
                    "  {} -> {} [style=dashed, label={}];",
                    dot_quote(&e.src),
                    dot_quote(&e.dst),
                    dot_quote(key)
                );
            }
            _ => {
                let _ = writeln!(out, "  {} -> {};", dot_quote(&e.src), dot_quote(&e.dst));
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}
