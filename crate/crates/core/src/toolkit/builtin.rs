//! Tools every role receives without binding them.

use std::sync::Arc;

use serde_json::{json, Value};

use super::{Handler, ParamKind, ParamSpec, ToolError, ToolOutput, ToolRegistry, ToolSpec};
use crate::memory::Hit;

pub const READ_ARTIFACT: &str = "read_artifact";
pub const WRITE_ARTIFACT: &str = "write_artifact";
pub const RETRIEVE_KNOWLEDGE: &str = "retrieve_knowledge";

/// Names configurations may not rebind.
pub const RESERVED: [&str; 3] = [READ_ARTIFACT, WRITE_ARTIFACT, RETRIEVE_KNOWLEDGE];

const DEFAULT_K: i64 = 3;

pub fn read_artifact_spec() -> ToolSpec {
    ToolSpec::new(
        READ_ARTIFACT,
        "Read the latest value stored on the blackboard under a key.",
        "builtin.read_artifact",
        vec![ParamSpec::required("key", ParamKind::String, "blackboard key")],
    )
}

pub fn write_artifact_spec() -> ToolSpec {
    ToolSpec::new(
        WRITE_ARTIFACT,
        "Write text to one of the current node's output keys.",
        "builtin.write_artifact",
        vec![
            ParamSpec::required("key", ParamKind::String, "declared output key"),
            ParamSpec::required("value", ParamKind::String, "text to store"),
        ],
    )
}

pub fn retrieve_knowledge_spec() -> ToolSpec {
    ToolSpec::new(
        RETRIEVE_KNOWLEDGE,
        "Search the knowledge bases attached to this role.",
        "builtin.retrieve_knowledge",
        vec![
            ParamSpec::required("query", ParamKind::String, "free text query"),
            ParamSpec::optional("kb", ParamKind::String, "restrict to one knowledge base"),
            ParamSpec::optional("k", ParamKind::Integer, "number of documents, default 3"),
        ],
    )
}

fn render_value(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_artifact_handler() -> Handler {
    Arc::new(|args, ctx| {
        let key = args.str("key")?;
        let artifact = ctx.blackboard.read_artifact(key)?;
        let data = json!({
            "key": key,
            "producer": artifact.producer,
            "version": artifact.version,
            "value": artifact.value,
        });
        Ok(ToolOutput::with_data(render_value(&artifact.value), data))
    })
}

fn write_artifact_handler() -> Handler {
    Arc::new(|args, ctx| {
        let key = args.str("key")?;
        let value = args.str("value")?;
        let version = ctx.blackboard.write_artifact(key, Value::String(value.to_string()), ctx.producer)?;
        Ok(ToolOutput::with_data(
            format!("stored {key} (version {version})"),
            json!({"key": key, "version": version}),
        ))
    })
}

fn retrieve_knowledge_handler() -> Handler {
    Arc::new(|args, ctx| {
        let query = args.str("query")?;
        let k = args.opt_i64("k").unwrap_or(DEFAULT_K);
        anyhow::ensure!(k >= 1, "k must be at least 1");
        let k = k as usize;
        let names: Vec<&str> = match args.opt_str("kb") {
            Some(kb) => {
                anyhow::ensure!(
                    ctx.kb_refs.iter().any(|r| r == kb),
                    "knowledge base {kb:?} is not attached to this role"
                );
                vec![kb]
            }
            None => ctx.kb_refs.iter().map(String::as_str).collect(),
        };
        anyhow::ensure!(!names.is_empty(), "no knowledge base is attached to this role");
        let mut hits: Vec<(&str, Hit<'_>)> = Vec::new();
        for name in names {
            let kb = ctx
                .knowledge
                .get(name)
                .ok_or_else(|| anyhow::anyhow!("knowledge base {name:?} is not loaded"))?;
            hits.extend(kb.retrieve(query, k)?.into_iter().map(|h| (name, h)));
        }
        hits.sort_by(|(ka, a), (kb, b)| {
            b.score.total_cmp(&a.score).then_with(|| ka.cmp(kb)).then_with(|| a.doc.id.cmp(&b.doc.id))
        });
        hits.truncate(k);
        if hits.is_empty() {
            return Ok(ToolOutput::with_data("no matching documents", json!([])));
        }
        let mut content = String::new();
        let mut data = Vec::new();
        for (kb, hit) in &hits {
            content.push_str(&format!("[{kb}/{}] score={:.4}\n{}\n", hit.doc.id, hit.score, hit.doc.text.trim_end()));
            data.push(json!({"kb": kb, "id": hit.doc.id, "score": hit.score}));
        }
        Ok(ToolOutput::with_data(content, Value::Array(data)))
    })
}

/// Registers the three implicit tools.
pub fn register_builtins(registry: &mut ToolRegistry) -> Result<(), ToolError> {
    registry.register_tool(read_artifact_spec(), read_artifact_handler())?;
    registry.register_tool(write_artifact_spec(), write_artifact_handler())?;
    registry.register_tool(retrieve_knowledge_spec(), retrieve_knowledge_handler())
}
