//! Sub-task execution as a conversation among configured agents.
//!
//! A node is solved by one agent configuration: a single role, several roles
//! taking turns in declaration order, or a leader delegating each turn to a
//! worker. The conversation runs until the termination policy says solved or
//! the assistant-turn budget is spent.
//!
//! Prompt contract:
//!
//! * The first message every role sees after its system prompt is the task
//!   message `Task <id>: <title>`, followed by the goal and the node's
//!   input and output keys.
//! * A hierarchical leader ends each message with a line `NEXT: <role>`
//!   naming the worker who speaks next. A missing or unknown name earns one
//!   correction message; a second miss fails the node with
//!   `FAILED_DELEGATION`.
//! * When a stop phrase is configured, a message containing it ends the node
//!   (subject to output completeness when `require_outputs` is set).
//! * A planner publishes its plan as a fenced block opened by ```` ```PLAN ````
//!   with one node per line: `id | title | goal | agent=<name> | in=<keys> |
//!   out=<keys> | after=<ids>`. The trailing fields are optional and lists
//!   are comma separated.

mod plan;
mod policy;
mod run;

use std::collections::BTreeSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::gateway::{ChatMessage, GatewayError};
use crate::graph::ExpansionRequest;
use crate::memory::MemoryWindow;

pub use plan::{parse_plan, PlanError, PLAN_FENCE};
pub use policy::{check_termination, next_speaker, parse_delegation, DelegationError, TerminationState};
pub use run::{run_node, task_message, NodeContext, ENGINE_SPEAKER, TASK_SPEAKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Single,
    MultiRoundRobin,
    MultiHierarchical,
}

impl Topology {
    pub fn is_multi(self) -> bool {
        self != Topology::Single
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RoleSpec {
    pub name: String,
    pub system_prompt: String,
    #[serde(default)]
    pub tool_names: Vec<String>,
    #[serde(default)]
    pub knowledge_base_refs: Vec<String>,
    /// Backend the role's requests are routed to.
    pub model_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Termination {
    pub max_turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_phrase: Option<String>,
    #[serde(default)]
    pub require_outputs: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AgentConfig {
    pub name: String,
    pub topology: Topology,
    pub roles: Vec<RoleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<String>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryWindow>,
}

impl AgentConfig {
    pub fn role(&self, name: &str) -> Option<&RoleSpec> {
        self.roles.iter().find(|r| r.name == name)
    }

    /// Structural problems, each as `(field, message)`.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |field: &str, msg: String| out.push((field.to_string(), msg));
        match self.topology {
            Topology::Single if self.roles.len() != 1 => {
                push("roles", format!("single topology needs exactly 1 role, found {}", self.roles.len()))
            }
            Topology::MultiRoundRobin | Topology::MultiHierarchical if self.roles.len() < 2 => {
                push("roles", format!("multi topologies need at least 2 roles, found {}", self.roles.len()))
            }
            _ => {}
        }
        let mut seen = BTreeSet::new();
        for r in &self.roles {
            if r.name.trim().is_empty() {
                push("roles", "role name must be non-empty".into());
            } else if !seen.insert(r.name.as_str()) {
                push("roles", format!("role name {:?} is used twice", r.name));
            }
        }
        match (&self.leader, self.topology) {
            (None, Topology::MultiHierarchical) => push("leader", "hierarchical topology needs a leader".into()),
            (Some(l), Topology::MultiHierarchical) if self.role(l).is_none() => {
                push("leader", format!("leader {l:?} is not one of the roles"))
            }
            (Some(_), Topology::Single | Topology::MultiRoundRobin) => {
                push("leader", "leader is only allowed for the hierarchical topology".into())
            }
            _ => {}
        }
        if self.termination.max_turns == 0 {
            push("termination.max_turns", "max_turns must be at least 1".into());
        }
        if let Some(m) = &self.memory {
            if m.max_messages == 0 {
                push("memory.max_messages", "max_messages must be at least 1".into());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Invocation {
    pub call_id: String,
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TranscriptEntry {
    /// Role name, `task`, `engine`, or `tool:<name>`.
    pub speaker: String,
    pub message: ChatMessage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation: Option<Invocation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, speaker: impl Into<String>, message: ChatMessage) {
        self.entries.push(TranscriptEntry { speaker: speaker.into(), message, invocation: None });
    }

    pub fn assistant_entries(&self) -> impl DoubleEndedIterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(|e| e.message.role == crate::gateway::Role::Assistant)
    }

    pub fn assistant_turns(&self) -> usize {
        self.assistant_entries().count()
    }

    pub fn last_assistant(&self) -> Option<&TranscriptEntry> {
        self.entries.iter().rev().find(|e| e.message.role == crate::gateway::Role::Assistant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Solved,
    Failed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NodeOutcome {
    pub node_id: String,
    pub status: NodeStatus,
    pub transcript: Transcript,
    pub outputs_written: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionRequest>,
    /// Why the node failed, when it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("MISSING_INPUT: node {node} needs {key:?} which is not on the blackboard")]
    MissingInput { node: String, key: String },
    #[error("BACKEND_ERROR at turn {turn} of node {node}: {source}")]
    Backend {
        node: String,
        turn: usize,
        #[source]
        source: GatewayError,
    },
    #[error("invalid agent setup: {0}")]
    Setup(String),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::MissingInput { .. } => "MISSING_INPUT",
            AgentError::Backend { .. } => "BACKEND_ERROR",
            AgentError::Setup(_) => "INVALID_AGENT",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn role(name: &str) -> RoleSpec {
        RoleSpec {
            name: name.into(),
            system_prompt: String::new(),
            tool_names: vec![],
            knowledge_base_refs: vec![],
            model_ref: "m".into(),
        }
    }

    fn config(topology: Topology, roles: &[&str], leader: Option<&str>) -> AgentConfig {
        AgentConfig {
            name: "a".into(),
            topology,
            roles: roles.iter().map(|r| role(r)).collect(),
            leader: leader.map(String::from),
            termination: Termination { max_turns: 3, stop_phrase: None, require_outputs: false },
            memory: None,
        }
    }

    #[test]
    fn topology_role_counts() {
        assert!(config(Topology::Single, &["a"], None).problems().is_empty());
        assert_eq!(config(Topology::Single, &["a", "b"], None).problems().len(), 1);
        assert_eq!(config(Topology::MultiRoundRobin, &["a"], None).problems().len(), 1);
        assert!(config(Topology::MultiHierarchical, &["a", "b"], Some("a")).problems().is_empty());
        assert_eq!(config(Topology::MultiHierarchical, &["a", "b"], Some("z")).problems()[0].0, "leader");
        assert_eq!(config(Topology::MultiHierarchical, &["a", "b"], None).problems()[0].0, "leader");
        assert_eq!(config(Topology::MultiRoundRobin, &["a", "a"], None).problems()[0].0, "roles");
    }
}
