use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::policy::{check_termination, next_speaker, TerminationState};
use super::{parse_plan, AgentConfig, AgentError, Invocation, NodeOutcome, NodeStatus, RoleSpec, Topology, Transcript, TranscriptEntry};
use crate::gateway::{ChatMessage, CompletionRequest, Gateway};
use crate::graph::{ExpansionRequest, TaskNode};
use crate::memory::{apply_window, Blackboard, KnowledgeStore};
use crate::toolkit::builtin::{READ_ARTIFACT, RETRIEVE_KNOWLEDGE, WRITE_ARTIFACT};
use crate::toolkit::{ToolContext, ToolDescriptor, ToolError, ToolRegistry, ToolResult};

pub const TASK_SPEAKER: &str = "task";
pub const ENGINE_SPEAKER: &str = "engine";

/// Shared services a node execution reads from.
#[derive(Clone, Copy)]
pub struct NodeContext<'a> {
    pub blackboard: &'a Blackboard,
    pub gateway: &'a Gateway,
    pub tools: &'a ToolRegistry,
    pub knowledge: &'a KnowledgeStore,
}

fn key_list(keys: &[String]) -> String {
    if keys.is_empty() {
        "(none)".into()
    } else {
        keys.join(", ")
    }
}

pub fn task_message(node: &TaskNode) -> String {
    format!(
        "Task {}: {}\n\n{}\n\nInputs: {}\nOutputs: {}",
        node.id,
        node.title,
        node.goal,
        key_list(&node.inputs),
        key_list(&node.outputs)
    )
}

fn allowed_tools(role: &RoleSpec) -> BTreeSet<&str> {
    let mut names: BTreeSet<&str> = role.tool_names.iter().map(String::as_str).collect();
    names.insert(READ_ARTIFACT);
    names.insert(WRITE_ARTIFACT);
    if !role.knowledge_base_refs.is_empty() {
        names.insert(RETRIEVE_KNOWLEDGE);
    }
    names
}

fn system_prompt(config: &AgentConfig, role: &RoleSpec) -> String {
    let mut prompt = role.system_prompt.clone();
    if config.topology == Topology::MultiHierarchical && config.leader.as_deref() == Some(role.name.as_str()) {
        let workers: Vec<&str> =
            config.roles.iter().map(|r| r.name.as_str()).filter(|n| *n != role.name).collect();
        prompt.push_str(&format!(
            "\n\nYou lead the workers {}. End each message with a line `NEXT: <worker>` to hand over the next turn.",
            workers.join(", ")
        ));
    }
    if let Some(stop) = &config.termination.stop_phrase {
        prompt.push_str(&format!("\n\nWhen the task is complete, write {stop}."));
    }
    prompt
}

fn correction(config: &AgentConfig) -> String {
    let leader = config.leader.as_deref().unwrap_or_default();
    let workers: Vec<&str> = config.roles.iter().map(|r| r.name.as_str()).filter(|n| *n != leader).collect();
    format!(
        "Your last message did not end with a valid delegation line. End it with `NEXT: <worker>` naming one of: {}.",
        workers.join(", ")
    )
}

struct Prepared<'a> {
    role: &'a RoleSpec,
    system: ChatMessage,
    allowed: BTreeSet<&'a str>,
    descriptors: Vec<ToolDescriptor>,
}

fn prepare<'a>(config: &'a AgentConfig, tools: &ToolRegistry) -> Result<BTreeMap<&'a str, Prepared<'a>>, AgentError> {
    let mut out = BTreeMap::new();
    for role in &config.roles {
        let allowed = allowed_tools(role);
        let mut descriptors = Vec::new();
        for name in &allowed {
            let spec = tools
                .lookup(name)
                .ok_or_else(|| AgentError::Setup(format!("role {} uses unregistered tool {name}", role.name)))?;
            descriptors.push(spec.descriptor());
        }
        let system = ChatMessage::system(system_prompt(config, role));
        out.insert(role.name.as_str(), Prepared { role, system, allowed, descriptors });
    }
    Ok(out)
}

fn written_outputs(node: &TaskNode, bb: &Blackboard, baseline: &BTreeMap<&str, u64>) -> BTreeSet<String> {
    node.outputs
        .iter()
        .filter(|k| {
            bb.read_artifact(k)
                .is_ok_and(|a| a.producer == node.id && a.version > baseline.get(k.as_str()).copied().unwrap_or(0))
        })
        .cloned()
        .collect()
}

fn call_tool(ctx: &NodeContext<'_>, prepared: &Prepared<'_>, node: &TaskNode, name: &str, args: &serde_json::Map<String, Value>) -> ToolResult {
    if !prepared.allowed.contains(name) {
        return ToolResult::error(ToolError::UnknownTool(name.to_string()));
    }
    let tctx = ToolContext {
        blackboard: ctx.blackboard,
        producer: &node.id,
        knowledge: ctx.knowledge,
        kb_refs: &prepared.role.knowledge_base_refs,
    };
    ctx.tools.invoke_tool(name, args, &tctx).unwrap_or_else(ToolResult::error)
}

/// Runs the conversation for `node` until termination.
///
/// The transcript starts with the task message. Each assistant message
/// counts as one turn; its tool calls are executed in order and answered
/// with one tool message each before the next speaker is chosen.
pub fn run_node(node: &TaskNode, config: &AgentConfig, ctx: &NodeContext<'_>) -> Result<NodeOutcome, AgentError> {
    if let Some((field, msg)) = config.problems().into_iter().next() {
        return Err(AgentError::Setup(format!("agent {}: {field}: {msg}", config.name)));
    }
    let mut transcript = Transcript::default();
    transcript.push(TASK_SPEAKER, ChatMessage::user(task_message(node)));
    if let Some(key) = node.inputs.iter().find(|k| !ctx.blackboard.contains(k)) {
        return Err(AgentError::MissingInput { node: node.id.clone(), key: key.clone() });
    }
    ctx.blackboard.declare(&node.id, node.outputs.iter().cloned());
    let baseline: BTreeMap<&str, u64> = node
        .outputs
        .iter()
        .filter_map(|k| ctx.blackboard.read_artifact(k).ok().map(|a| (k.as_str(), a.version)))
        .collect();
    let prepared = prepare(config, ctx.tools)?;
    let mut expansion: Option<ExpansionRequest> = None;
    let mut error = None;

    let status = loop {
        let written = written_outputs(node, ctx.blackboard, &baseline);
        match check_termination(&transcript, &config.termination, &written, &node.outputs) {
            TerminationState::Solved => break NodeStatus::Solved,
            TerminationState::BudgetExhausted => break NodeStatus::BudgetExhausted,
            TerminationState::Continue => {}
        }
        let speaker = match config.topology {
            Topology::Single => config.roles[0].name.clone(),
            topology => match next_speaker(topology, &config.roles, &transcript, config.leader.as_deref()) {
                Ok(s) => s,
                Err(e) => {
                    error = Some(e.to_string());
                    break NodeStatus::Failed;
                }
            },
        };
        let reprompt = config.topology == Topology::MultiHierarchical
            && transcript.last_assistant().is_some_and(|e| e.speaker == speaker);
        if reprompt {
            transcript.push(ENGINE_SPEAKER, ChatMessage::user(correction(config)));
        }
        let p = &prepared[speaker.as_str()];
        let mut messages = Vec::with_capacity(transcript.len() + 1);
        messages.push(p.system.clone());
        messages.extend(transcript.entries.iter().map(|e| e.message.clone()));
        if let Some(window) = &config.memory {
            messages = apply_window(&messages, window);
        }
        let mut req = CompletionRequest::new(p.role.model_ref.clone(), messages);
        req.tool_specs = p.descriptors.clone();
        let turn = transcript.assistant_turns();
        let mut reply = ctx
            .gateway
            .complete(&req)
            .map_err(|source| AgentError::Backend { node: node.id.clone(), turn, source })?;
        reply.name = Some(speaker.clone());
        let calls = reply.tool_calls.clone();
        let content = reply.content.clone();
        transcript.push(speaker.clone(), reply);
        for call in calls {
            let result = call_tool(ctx, p, node, &call.tool_name, &call.arguments);
            transcript.entries.push(TranscriptEntry {
                speaker: format!("tool:{}", call.tool_name),
                message: ChatMessage::tool_result(call.id.clone(), result.content),
                invocation: Some(Invocation {
                    call_id: call.id,
                    tool_name: call.tool_name,
                    arguments: call.arguments,
                    ok: result.ok,
                    data: result.data,
                }),
            });
        }
        if node.is_planner() {
            match parse_plan(node, &content) {
                Some(Ok(req)) => {
                    if let Some(key) = node.outputs.first() {
                        let text = super::plan::plan_block(&content).and_then(Result::ok).unwrap_or_default();
                        // Declared above, so the write cannot be rejected.
                        let _ = ctx.blackboard.write_artifact(key, Value::String(text.to_string()), &node.id);
                    }
                    expansion = Some(req);
                }
                Some(Err(e)) => {
                    transcript.push(ENGINE_SPEAKER, ChatMessage::user(format!("PLAN rejected: {e}")));
                }
                None => {}
            }
        }
    };

    let outputs_written = written_outputs(node, ctx.blackboard, &baseline).into_iter().collect();
    Ok(NodeOutcome {
        node_id: node.id.clone(),
        status,
        transcript,
        outputs_written,
        expansion: if status == NodeStatus::Solved { expansion } else { None },
        error,
    })
}
