use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::NodeOutcome;
use crate::graph::{TaskEdge, TaskGraph, TaskNode};
use crate::memory::Artifact;

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Graph,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NodeRecord {
    pub agent: String,
    /// Zero in deterministic mode.
    pub wall_clock_ms: u64,
    #[serde(flatten)]
    pub outcome: NodeOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExpansionRecord {
    pub planner_id: String,
    pub added_nodes: Vec<TaskNode>,
    pub added_edges: Vec<TaskEdge>,
    /// Set when the request was rejected and the graph left unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExpansionRecord {
    pub fn applied(&self) -> bool {
        self.error.is_none()
    }
}

/// Everything a run produced, in a replayable and diffable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TraceDocument {
    pub format: u32,
    pub config_name: String,
    pub config_digest: String,
    pub kind: RunKind,
    pub deterministic: bool,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
    /// Node outcomes in execution order.
    pub nodes: Vec<NodeRecord>,
    pub expansions: Vec<ExpansionRecord>,
    /// Graph after every applied expansion.
    pub final_graph: TaskGraph,
    pub blackboard: BTreeMap<String, Artifact>,
    /// Total run time; zero in deterministic mode.
    pub wall_clock_ms: u64,
    /// Why the run stopped early, when it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TraceDocument {
    pub fn order(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.outcome.node_id.as_str()).collect()
    }

    pub fn outcome(&self, node_id: &str) -> Option<&NodeOutcome> {
        self.nodes.iter().map(|n| &n.outcome).find(|o| o.node_id == node_id)
    }

    /// Copy with every wall-clock field set to zero.
    pub fn without_wall_clock(&self) -> Self {
        let mut t = self.clone();
        t.wall_clock_ms = 0;
        for n in &mut t.nodes {
            n.wall_clock_ms = 0;
        }
        t
    }

    /// Checks that the executed nodes appear once each and in an order
    /// compatible with the final graph's execution edges: a node runs only
    /// after every execution predecessor has run.
    pub fn check_order(&self) -> Result<(), String> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let preds = self.final_graph.predecessors();
        for id in self.order() {
            let Some(p) = preds.get(id) else {
                return Err(format!("node {id} ran but is not in the final graph"));
            };
            if let Some(missing) = p.iter().find(|p| !seen.contains(**p)) {
                return Err(format!("node {id} ran before its predecessor {missing}"));
            }
            if !seen.insert(id) {
                return Err(format!("node {id} ran twice"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    /// Validates the node order, then writes pretty JSON.
    pub fn write_to(&self, path: &Path) -> anyhow::Result<()> {
        self.check_order().map_err(|e| anyhow::anyhow!("INVALID_TRACE: {e}"))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
