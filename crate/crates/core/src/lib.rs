//! Configurable task-graph solving with single, round-robin and hierarchical
//! multi-agent sub-task execution.
//!
//! A run is described by a [`engine::RunConfig`]: a task graph whose nodes are
//! sub-tasks, the agent configuration solving each node, the chat backends the
//! agents talk to, the tools they may call, and the knowledge bases they may
//! query. The [`engine`] schedules the graph, executes every node through the
//! [`agent`] runtime, applies dynamic expansions emitted by planner nodes, and
//! records everything into a replayable trace.
//!
//! The [`eda`] module is a desk-scale timing-debug pack: a line-based
//! multi-corner timing report format, deterministic anomaly analyses, a seeded
//! fixture generator with planted-anomaly manifests, and the tool bindings that
//! expose all of it to agents.

pub mod agent;
pub mod eda;
pub mod engine;
pub mod gateway;
pub mod graph;
pub mod memory;
pub mod par;
pub mod toolkit;

pub use agent::{AgentConfig, NodeOutcome, NodeStatus, RoleSpec, Termination, Topology};
pub use engine::{RunConfig, RunOptions, TraceDocument};
pub use gateway::{ChatBackend, ChatMessage, CompletionRequest, Gateway, Role, ToolCallRequest};
pub use graph::{EdgeKind, ExpansionRequest, GraphMode, TaskEdge, TaskGraph, TaskNode};
pub use memory::{Blackboard, KnowledgeBase};
pub use par::Exec;
pub use toolkit::{ToolRegistry, ToolResult, ToolSpec};
