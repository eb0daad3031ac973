use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::gateway::{canonical_value_string, ScriptFile};
use crate::graph::{validate_graph, TaskGraph};
use crate::toolkit::builtin::RESERVED;
use crate::toolkit::ToolCatalog;

/// Name accepted by [`KnowledgeSource::bundled`].
pub const BUNDLED_RTL_SYNTAX: &str = "rtl_syntax";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDef {
    /// Chat-completions endpoint. `base_url` falls back to `MARCO_BASE_URL`.
    Http {
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_url: Option<String>,
        #[serde(default)]
        strict_tool_args: bool,
    },
    /// Scripted replies from a script file.
    Mock { script: String },
    /// Recorded replies from a cache directory.
    Replay { dir: String },
}

impl BackendDef {
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendDef::Http { .. } => BackendKind::Http,
            BackendDef::Mock { .. } => BackendKind::Mock,
            BackendDef::Replay { .. } => BackendKind::Replay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(Self::Http),
            "mock" => Ok(Self::Mock),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown backend kind {other:?}, expected mock, http or replay")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
pub struct KnowledgeSource {
    /// Directory of text files, one document per file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// A corpus shipped with the library (`rtl_syntax`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundled: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Limits {
    /// Node executions allowed in one run, expansions included.
    pub max_node_executions: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_node_executions: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
pub struct BaselineSpec {
    /// Agent solving the collapsed node; defaults to the first node's agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
}

/// A full run description. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunConfig {
    pub name: String,
    pub graph: TaskGraph,
    pub agents: Vec<AgentConfig>,
    pub backends: BTreeMap<String, BackendDef>,
    #[serde(default)]
    pub knowledge_bases: BTreeMap<String, KnowledgeSource>,
    /// Tool name to handler reference.
    #[serde(default)]
    pub tool_bindings: BTreeMap<String, String>,
    /// Blackboard keys seeded from files before the first node runs.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CONFIG_ERROR {}: {}: {}", self.path, self.field, self.message)
    }
}

/// Every problem found in a config, not just the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    /// Reads, parses and fully validates a config file.
    pub fn load(path: &Path, catalog: &ToolCatalog) -> Result<Self, ConfigError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            issues: vec![ConfigIssue { path: label.clone(), field: "(file)".into(), message: e.to_string() }],
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base, &label, catalog)
    }

    pub fn from_json(text: &str, base_dir: &Path, label: &str, catalog: &ToolCatalog) -> Result<Self, ConfigError> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            issues: vec![ConfigIssue { path: label.into(), field: "(document)".into(), message: e.to_string() }],
        })?;
        config.base_dir = base_dir.to_path_buf();
        let issues = config.problems(catalog);
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError {
                issues: issues
                    .into_iter()
                    .map(|(field, message)| ConfigIssue { path: label.into(), field, message })
                    .collect(),
            })
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn agent(&self, name: &str) -> Option<&AgentConfig> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Lowercase hex SHA-256 of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical_value_string(&value).as_bytes()))
    }

    /// Every cross-reference and graph problem as `(field, message)`.
    pub fn problems(&self, catalog: &ToolCatalog) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |field: String, msg: String| out.push((field, msg));

        for v in validate_graph(&self.graph).violations {
            push(format!("graph[{}]", v.subject), format!("{}: {}", v.code, v.detail));
        }

        let mut agent_names = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !agent_names.insert(a.name.as_str()) {
                push(format!("agents[{i}].name"), format!("agent name {:?} is used twice", a.name));
            }
            for (field, msg) in a.problems() {
                push(format!("agents.{}.{field}", a.name), msg);
            }
            for r in &a.roles {
                let at = format!("agents.{}.roles.{}", a.name, r.name);
                if !self.backends.contains_key(&r.model_ref) {
                    push(format!("{at}.model_ref"), format!("unknown backend {:?}", r.model_ref));
                }
                for t in &r.tool_names {
                    if !self.tool_bindings.contains_key(t) && !RESERVED.contains(&t.as_str()) {
                        push(format!("{at}.tool_names"), format!("unknown tool {t:?}"));
                    }
                }
                for kb in &r.knowledge_base_refs {
                    if !self.knowledge_bases.contains_key(kb) {
                        push(format!("{at}.knowledge_base_refs"), format!("unknown knowledge base {kb:?}"));
                    }
                }
            }
        }

        let produced: BTreeSet<&str> = self
            .graph
            .nodes
            .iter()
            .flat_map(|n| n.outputs.iter().map(String::as_str))
            .chain(self.inputs.keys().map(String::as_str))
            .collect();
        for n in &self.graph.nodes {
            if self.agent(&n.agent_ref).is_none() {
                push(format!("graph.nodes.{}.agent_ref", n.id), format!("unknown agent {:?}", n.agent_ref));
            }
            for k in &n.inputs {
                if !produced.contains(k.as_str()) {
                    push(
                        format!("graph.nodes.{}.inputs", n.id),
                        format!("key {k:?} is neither a config input nor any node's output"),
                    );
                }
            }
        }

        for (name, handler) in &self.tool_bindings {
            if RESERVED.contains(&name.as_str()) {
                push(format!("tool_bindings.{name}"), format!("{name} is a built-in tool and cannot be rebound"));
            }
            if !catalog.contains(handler) {
                push(format!("tool_bindings.{name}"), format!("unknown handler {handler:?}"));
            }
        }

        for (name, def) in &self.backends {
            match def {
                BackendDef::Mock { script } => {
                    if let Err(e) = ScriptFile::load(&self.resolve(script)) {
                        push(format!("backends.{name}.script"), format!("{script}: {e:#}"));
                    }
                }
                BackendDef::Http { model, .. } if model.trim().is_empty() => {
                    push(format!("backends.{name}.model"), "model must be non-empty".into());
                }
                _ => {}
            }
        }

        for (name, src) in &self.knowledge_bases {
            match (&src.dir, &src.bundled) {
                (Some(dir), None) => {
                    if !self.resolve(dir).is_dir() {
                        push(format!("knowledge_bases.{name}.dir"), format!("{dir} is not a directory"));
                    }
                }
                (None, Some(b)) if b == BUNDLED_RTL_SYNTAX => {}
                (None, Some(b)) => push(format!("knowledge_bases.{name}.bundled"), format!("unknown bundled corpus {b:?}")),
                _ => push(format!("knowledge_bases.{name}"), "set exactly one of dir or bundled".into()),
            }
        }

        for (key, file) in &self.inputs {
            if !self.resolve(file).is_file() {
                push(format!("inputs.{key}"), format!("{file} is not a file"));
            }
        }

        let nodes = self.graph.nodes.len();
        if self.limits.max_node_executions < nodes {
            push(
                "limits.max_node_executions".into(),
                format!("{} is below the {nodes} nodes of the initial graph", self.limits.max_node_executions),
            );
        }
        if let Some(a) = &self.baseline.agent {
            if self.agent(a).is_none() {
                push("baseline.agent".into(), format!("unknown agent {a:?}"));
            }
        }
        out
    }
}
