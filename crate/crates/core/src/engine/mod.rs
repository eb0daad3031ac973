//! Config loading, graph execution, baseline runs, traces and scoring.

mod config;
mod run;
mod score;
mod trace;

use thiserror::Error;

pub use config::{BackendDef, BackendKind, BaselineSpec, ConfigError, ConfigIssue, KnowledgeSource, Limits, RunConfig, BUNDLED_RTL_SYNTAX};
pub use run::{baseline_config, build_gateway, build_knowledge, build_tools, run, run_baseline, RunFailure, RunOptions, BASELINE_NODE};
pub use score::{score, ScoreReport, TaskScore};
pub use trace::{ExpansionRecord, NodeRecord, RunKind, TraceDocument, TRACE_FORMAT};

use crate::agent::AgentError;
use crate::graph::GraphError;
use crate::toolkit::ToolCatalog;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("BUDGET_EXCEEDED: the run would exceed {limit} node executions")]
    BudgetExceeded { limit: usize },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("INVALID_TRACE: {0}")]
    InvalidTrace(String),
    #[error("SETUP_ERROR: {0}")]
    Setup(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::BudgetExceeded { .. } => "BUDGET_EXCEEDED",
            EngineError::Agent(e) => e.code(),
            EngineError::Graph(_) => "GRAPH_ERROR",
            EngineError::InvalidTrace(_) => "INVALID_TRACE",
            EngineError::Setup(_) => "SETUP_ERROR",
        }
    }
}

/// Handlers available to `tool_bindings`: the timing-debug tools.
pub fn default_catalog() -> ToolCatalog {
    crate::eda::eda_catalog()
}

/// JSON schema of the config file format.
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schema serializes")
}

/// JSON schema of the trace file format.
pub fn trace_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(TraceDocument)).expect("schema serializes")
}
