use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{BackendDef, BackendKind, RunConfig, BUNDLED_RTL_SYNTAX};
use super::trace::{ExpansionRecord, NodeRecord, RunKind, TraceDocument, TRACE_FORMAT};
use super::EngineError;
use crate::agent::{run_node, task_message, AgentConfig, AgentError, NodeContext, NodeOutcome, NodeStatus, Transcript, TASK_SPEAKER};
use crate::eda::seed_rtl_syntax_kb;
use crate::gateway::{ChatBackend, ChatMessage, Gateway, HttpBackend, HttpSettings, MockBackend, ReplayBackend, ScriptFile};
use crate::graph::{apply_expansion, Expansion, ready_frontier, ExpansionRequest, GraphMode, TaskGraph, TaskNode};
use crate::memory::{Blackboard, KnowledgeBase, KnowledgeStore, INPUT_PRODUCER};
use crate::par::Exec;
use crate::toolkit::builtin::register_builtins;
use crate::toolkit::{ToolCatalog, ToolRegistry};

/// Id of the single node a baseline run collapses the graph into.
pub const BASELINE_NODE: &str = "baseline";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run one node at a time in frontier order and zero wall-clock fields.
    pub deterministic: bool,
    /// Route every request to the config's first backend of this kind.
    pub backend: Option<BackendKind>,
    /// Replace the cache directory of replay backends.
    pub cache_dir: Option<PathBuf>,
    /// Record every reply into this cache directory.
    pub record_dir: Option<PathBuf>,
    /// Write a blackboard snapshot here after every node.
    pub snapshot_path: Option<PathBuf>,
}

/// A run that stopped early, with the trace up to that point.
#[derive(Debug)]
pub struct RunFailure {
    pub error: EngineError,
    pub trace: TraceDocument,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

fn build_backend(config: &RunConfig, def: &BackendDef, options: &RunOptions) -> Result<Arc<dyn ChatBackend>, EngineError> {
    Ok(match def {
        BackendDef::Mock { script } => {
            let file = ScriptFile::load(&config.resolve(script)).map_err(|e| EngineError::Setup(format!("{script}: {e:#}")))?;
            Arc::new(MockBackend::from_file(file))
        }
        BackendDef::Replay { dir } => {
            let dir = options.cache_dir.clone().unwrap_or_else(|| config.resolve(dir));
            Arc::new(ReplayBackend::replay(dir))
        }
        BackendDef::Http { model, base_url, strict_tool_args } => {
            let mut settings = HttpSettings::from_env(base_url.as_deref(), model).map_err(|e| EngineError::Setup(e.to_string()))?;
            settings.strict_tool_args = *strict_tool_args;
            Arc::new(HttpBackend::new(settings))
        }
    })
}

fn recorded(backend: Arc<dyn ChatBackend>, options: &RunOptions) -> Arc<dyn ChatBackend> {
    match &options.record_dir {
        Some(dir) => Arc::new(ReplayBackend::recording(dir.clone(), backend)),
        None => backend,
    }
}

/// Backends used by the run's roles, honoring the override and recording
/// options. Only referenced backends are built.
pub fn build_gateway(config: &RunConfig, options: &RunOptions) -> Result<Gateway, EngineError> {
    if let Some(kind) = options.backend {
        let backend = match config.backends.values().find(|d| d.kind() == kind) {
            Some(def) => build_backend(config, def, options)?,
            None => match (kind, &options.cache_dir) {
                (BackendKind::Replay, Some(dir)) => Arc::new(ReplayBackend::replay(dir.clone())),
                _ => return Err(EngineError::Setup(format!("config defines no {kind:?} backend"))),
            },
        };
        return Ok(Gateway::single(recorded(backend, options)));
    }
    let used: BTreeSet<&str> = config.agents.iter().flat_map(|a| a.roles.iter().map(|r| r.model_ref.as_str())).collect();
    let mut gateway = Gateway::new();
    for (name, def) in &config.backends {
        if used.contains(name.as_str()) {
            gateway = gateway.with_backend(name.clone(), recorded(build_backend(config, def, options)?, options));
        }
    }
    Ok(gateway)
}

pub fn build_tools(config: &RunConfig, catalog: &ToolCatalog) -> Result<ToolRegistry, EngineError> {
    let mut registry = ToolRegistry::new();
    register_builtins(&mut registry).map_err(|e| EngineError::Setup(e.to_string()))?;
    for (name, handler) in &config.tool_bindings {
        catalog.bind(&mut registry, name, handler).map_err(|e| EngineError::Setup(e.to_string()))?;
    }
    Ok(registry)
}

pub fn build_knowledge(config: &RunConfig) -> Result<KnowledgeStore, EngineError> {
    let mut store = KnowledgeStore::new();
    for (name, src) in &config.knowledge_bases {
        let kb = match (&src.dir, src.bundled.as_deref()) {
            (Some(dir), _) => KnowledgeBase::from_dir(name.clone(), &config.resolve(dir)).map_err(|e| EngineError::Setup(e.to_string()))?,
            (None, Some(BUNDLED_RTL_SYNTAX)) => {
                let mut kb = seed_rtl_syntax_kb();
                kb.name = name.clone();
                kb
            }
            _ => return Err(EngineError::Setup(format!("knowledge base {name} has no usable source"))),
        };
        store.insert(name.clone(), Arc::new(kb));
    }
    Ok(store)
}

fn seed_blackboard(config: &RunConfig) -> Result<Blackboard, EngineError> {
    let bb = Blackboard::new();
    bb.declare(INPUT_PRODUCER, config.inputs.keys().cloned());
    for (key, file) in &config.inputs {
        let path = config.resolve(file);
        let text = std::fs::read_to_string(&path).map_err(|e| EngineError::Setup(format!("{}: {e}", path.display())))?;
        bb.write_artifact(key, Value::String(text), INPUT_PRODUCER).map_err(|e| EngineError::Setup(e.to_string()))?;
    }
    Ok(bb)
}

struct Services {
    gateway: Gateway,
    tools: ToolRegistry,
    knowledge: KnowledgeStore,
    blackboard: Blackboard,
}

impl Services {
    fn build(config: &RunConfig, options: &RunOptions, catalog: &ToolCatalog) -> Result<Self, EngineError> {
        Ok(Self {
            gateway: build_gateway(config, options)?,
            tools: build_tools(config, catalog)?,
            knowledge: build_knowledge(config)?,
            blackboard: seed_blackboard(config)?,
        })
    }

    fn ctx(&self) -> NodeContext<'_> {
        NodeContext { blackboard: &self.blackboard, gateway: &self.gateway, tools: &self.tools, knowledge: &self.knowledge }
    }
}

fn elapsed_ms(start: Instant, deterministic: bool) -> u64 {
    if deterministic {
        0
    } else {
        start.elapsed().as_millis() as u64
    }
}

/// Runs one node; a missing input becomes a failed outcome instead of
/// aborting the run.
fn execute(node: &TaskNode, agent: &AgentConfig, ctx: &NodeContext<'_>, deterministic: bool) -> Result<NodeRecord, AgentError> {
    let start = Instant::now();
    let outcome = match run_node(node, agent, ctx) {
        Ok(o) => o,
        Err(e @ AgentError::MissingInput { .. }) => {
            let mut transcript = Transcript::default();
            transcript.push(TASK_SPEAKER, ChatMessage::user(task_message(node)));
            NodeOutcome {
                node_id: node.id.clone(),
                status: NodeStatus::Failed,
                transcript,
                outputs_written: Vec::new(),
                expansion: None,
                error: Some(e.to_string()),
            }
        }
        Err(e) => return Err(e),
    };
    Ok(NodeRecord { agent: agent.name.clone(), wall_clock_ms: elapsed_ms(start, deterministic), outcome })
}

fn check_expansion(config: &RunConfig, graph: &TaskGraph, req: &ExpansionRequest) -> Result<TaskGraph, String> {
    if let Some(n) = req.new_nodes.iter().find(|n| config.agent(&n.agent_ref).is_none()) {
        return Err(format!("node {} names unknown agent {:?}", n.id, n.agent_ref));
    }
    apply_expansion(graph, req).map_err(|e| e.to_string())
}

struct Run<'a> {
    config: &'a RunConfig,
    graph: TaskGraph,
    kind: RunKind,
    options: &'a RunOptions,
    metadata: BTreeMap<String, Value>,
    records: Vec<NodeRecord>,
    expansions: Vec<ExpansionRecord>,
    start: Instant,
}

impl Run<'_> {
    fn trace(self, services: Option<&Services>, error: Option<&EngineError>) -> TraceDocument {
        TraceDocument {
            format: TRACE_FORMAT,
            config_name: self.config.name.clone(),
            config_digest: self.config.digest(),
            kind: self.kind,
            deterministic: self.options.deterministic,
            metadata: self.metadata,
            nodes: self.records,
            expansions: self.expansions,
            final_graph: self.graph,
            blackboard: services.map(|s| s.blackboard.snapshot()).unwrap_or_default(),
            wall_clock_ms: elapsed_ms(self.start, self.options.deterministic),
            error: error.map(ToString::to_string),
        }
    }

    fn fail(self, services: Option<&Services>, error: EngineError) -> Box<RunFailure> {
        let trace = self.trace(services, Some(&error));
        Box::new(RunFailure { error, trace })
    }

    fn absorb(&mut self, record: NodeRecord) {
        if let Some(req) = &record.outcome.expansion {
            let mut entry = ExpansionRecord {
                planner_id: req.planner_id.clone(),
                added_nodes: req.new_nodes.clone(),
                added_edges: req.new_edges.clone(),
                error: None,
            };
            match check_expansion(self.config, &self.graph, req) {
                Ok(g) => self.graph = g,
                Err(e) => entry.error = Some(e),
            }
            self.expansions.push(entry);
        }
        self.records.push(record);
    }

    fn snapshot(&self, services: &Services) {
        if let Some(path) = &self.options.snapshot_path {
            let text = serde_json::to_string_pretty(&services.blackboard.snapshot()).expect("snapshot serializes");
            if let Err(e) = std::fs::write(path, text) {
                tracing::warn!("blackboard snapshot to {} failed: {e}", path.display());
            }
        }
    }

    fn drive(mut self, services: &Services) -> Result<TraceDocument, Box<RunFailure>> {
        let limit = self.config.limits.max_node_executions;
        let mut done: BTreeSet<String> = BTreeSet::new();
        loop {
            let frontier = match ready_frontier(&self.graph, &done) {
                Ok(f) => f,
                Err(e) => return Err(self.fail(Some(services), EngineError::Graph(e))),
            };
            if frontier.is_empty() {
                break;
            }
            let batch: Vec<String> = if self.options.deterministic { frontier[..1].to_vec() } else { frontier };
            let room = limit.saturating_sub(self.records.len());
            if room == 0 {
                return Err(self.fail(Some(services), EngineError::BudgetExceeded { limit }));
            }
            let batch = &batch[..batch.len().min(room)];
            let mut jobs: Vec<(TaskNode, AgentConfig)> = Vec::with_capacity(batch.len());
            for id in batch {
                let node = self.graph.node(id).expect("frontier ids are graph nodes").clone();
                match self.config.agent(&node.agent_ref) {
                    Some(agent) => jobs.push((node, agent.clone())),
                    None => {
                        let e = EngineError::Setup(format!("node {id} names unknown agent {:?}", node.agent_ref));
                        return Err(self.fail(Some(services), e));
                    }
                }
            }
            let exec = if self.options.deterministic { Exec::Sequential } else { Exec::default() };
            let ctx = services.ctx();
            let deterministic = self.options.deterministic;
            let results = exec.map(&jobs, |(node, agent)| execute(node, agent, &ctx, deterministic));
            for ((node, _), result) in jobs.iter().zip(results) {
                match result {
                    Ok(record) => {
                        tracing::info!(node = %node.id, status = ?record.outcome.status, "node finished");
                        self.absorb(record);
                        self.snapshot(services);
                        done.insert(node.id.clone());
                    }
                    Err(e) => return Err(self.fail(Some(services), EngineError::Agent(e))),
                }
            }
        }
        let trace = self.trace(Some(services), None);
        if let Err(e) = trace.check_order() {
            return Err(Box::new(RunFailure { error: EngineError::InvalidTrace(e), trace }));
        }
        Ok(trace)
    }
}

fn start<'a>(config: &'a RunConfig, graph: TaskGraph, kind: RunKind, options: &'a RunOptions) -> Run<'a> {
    Run {
        config,
        graph,
        kind,
        options,
        metadata: BTreeMap::new(),
        records: Vec::new(),
        expansions: Vec::new(),
        start: Instant::now(),
    }
}

/// Executes the task graph: repeatedly take the ready frontier, run its
/// nodes, apply expansions, until nothing is left.
pub fn run(config: &RunConfig, catalog: &ToolCatalog, options: &RunOptions) -> Result<TraceDocument, Box<RunFailure>> {
    let run = start(config, config.graph.clone(), RunKind::Graph, options);
    let services = match Services::build(config, options, catalog) {
        Ok(s) => s,
        Err(e) => return Err(run.fail(None, e)),
    };
    run.drive(&services)
}

/// The collapsed single-node form of a config used by [`run_baseline`],
/// with its turn budget.
pub fn baseline_config(config: &RunConfig) -> Result<(RunConfig, usize), EngineError> {
    let nodes = &config.graph.nodes;
    let first = nodes.first().ok_or_else(|| EngineError::Setup("graph has no nodes to collapse".into()))?;
    let budget: usize = nodes
        .iter()
        .map(|n| config.agent(&n.agent_ref).map_or(0, |a| a.termination.max_turns))
        .sum();
    let agent_name = config.baseline.agent.clone().unwrap_or_else(|| first.agent_ref.clone());
    let base = config.agent(&agent_name).ok_or_else(|| EngineError::Setup(format!("unknown agent {agent_name:?}")))?;
    let used: Vec<&AgentConfig> = nodes.iter().filter_map(|n| config.agent(&n.agent_ref)).collect();
    let tools: BTreeSet<String> = used.iter().flat_map(|a| a.roles.iter().flat_map(|r| r.tool_names.iter().cloned())).collect();
    let kbs: BTreeSet<String> =
        used.iter().flat_map(|a| a.roles.iter().flat_map(|r| r.knowledge_base_refs.iter().cloned())).collect();

    let mut agent = base.clone();
    agent.termination.max_turns = budget;
    for role in &mut agent.roles {
        role.tool_names = tools.iter().cloned().collect();
        role.knowledge_base_refs = kbs.iter().cloned().collect();
    }

    let node = if nodes.len() == 1 {
        first.clone()
    } else {
        let produced: BTreeSet<&String> = nodes.iter().flat_map(|n| n.outputs.iter()).collect();
        let mut inputs: Vec<String> = Vec::new();
        let mut outputs: Vec<String> = Vec::new();
        for n in nodes {
            for k in &n.inputs {
                if !produced.contains(k) && !inputs.contains(k) {
                    inputs.push(k.clone());
                }
            }
            for k in &n.outputs {
                if !outputs.contains(k) {
                    outputs.push(k.clone());
                }
            }
        }
        let goal = nodes
            .iter()
            .map(|n| format!("- {}: {}\n{}", n.id, n.title, n.goal))
            .collect::<Vec<_>>()
            .join("\n\n");
        TaskNode {
            id: BASELINE_NODE.into(),
            title: format!("{} (standard task solving)", config.name),
            goal: format!("Solve all of the following in one conversation.\n\n{goal}"),
            agent_ref: agent.name.clone(),
            inputs,
            outputs,
            expansion: Expansion::None,
        }
    };
    let mut collapsed = config.clone();
    collapsed.graph = TaskGraph { mode: GraphMode::Static, nodes: vec![TaskNode { expansion: Expansion::None, ..node }], edges: Vec::new() };
    collapsed.agents = config.agents.iter().map(|a| if a.name == agent.name { agent.clone() } else { a.clone() }).collect();
    Ok((collapsed, budget))
}

/// Solves the whole graph as one node with the summed turn budget and the
/// union of tools, for comparison against [`run`].
pub fn run_baseline(config: &RunConfig, catalog: &ToolCatalog, options: &RunOptions) -> Result<TraceDocument, Box<RunFailure>> {
    let (collapsed, budget) = match baseline_config(config) {
        Ok(c) => c,
        Err(e) => return Err(start(config, config.graph.clone(), RunKind::Baseline, options).fail(None, e)),
    };
    let per_node: BTreeMap<&str, usize> = config
        .graph
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), config.agent(&n.agent_ref).map_or(0, |a| a.termination.max_turns)))
        .collect();
    let mut run = start(&collapsed, collapsed.graph.clone(), RunKind::Baseline, options);
    run.metadata.insert("baseline_turn_budget".into(), json!(budget));
    run.metadata.insert("per_node_turn_budgets".into(), json!(per_node));
    run.metadata.insert("source_config_digest".into(), json!(config.digest()));
    let services = match Services::build(&collapsed, options, catalog) {
        Ok(s) => s,
        Err(e) => return Err(run.fail(None, e)),
    };
    run.drive(&services)
}
