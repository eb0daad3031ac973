//! Chat-completion boundary shared by every agent.
//!
//! Three backends sit behind [`ChatBackend`]: [`HttpBackend`] for any
//! chat-completions compatible endpoint, [`MockBackend`] for deterministic
//! scripted replies, and [`ReplayBackend`] which serves recorded responses
//! keyed by [`canonical_hash`].

mod hash;
mod http;
mod mock;
mod replay;

use std::collections::BTreeMap;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::toolkit::ToolDescriptor;

pub use hash::{canonical_hash, canonical_json, canonical_value_string};
pub use http::{HttpBackend, HttpSettings};
pub use mock::{Matcher, MockBackend, Script, ScriptFile, ScriptId};
pub use replay::{CacheEntry, ReplayBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ToolCallRequest {
    pub id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    /// Speaker name for multi-agent conversations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), name: None, tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self { tool_call_id: Some(call_id.into()), ..Self::plain(Role::Tool, content) }
    }

    pub fn with_tool_call(
        mut self,
        id: impl Into<String>,
        tool_name: impl Into<String>,
        arguments: Value,
    ) -> Self {
        let arguments = match arguments {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => panic!("tool arguments must be an object, got {other}"),
        };
        self.tool_calls.push(ToolCallRequest { id: id.into(), tool_name: tool_name.into(), arguments });
        self
    }

    /// Checks the role-dependent field invariants.
    pub fn check(&self) -> Result<(), String> {
        if !self.tool_calls.is_empty() && self.role != Role::Assistant {
            return Err(format!("{:?} message carries tool calls", self.role));
        }
        if self.tool_call_id.is_some() != (self.role == Role::Tool) {
            return Err("tool_call_id must be present exactly on tool messages".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for call in &self.tool_calls {
            if !ids.insert(call.id.as_str()) {
                return Err(format!("duplicate tool call id {:?}", call.id));
            }
        }
        Ok(())
    }
}

fn default_temperature() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Backend name the request is routed to.
    pub model_ref: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub tool_specs: Vec<ToolDescriptor>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(model_ref: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { model_ref: model_ref.into(), messages, tool_specs: Vec::new(), temperature: 0.0 }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("messages must be non-empty".into())),
            Some(m) if m.role != Role::System => {
                Err(GatewayError::InvalidRequest("first message must be the system prompt".into()))
            }
            _ => {
                for m in &self.messages {
                    m.check().map_err(GatewayError::InvalidRequest)?;
                }
                Ok(())
            }
        }
    }

    /// Number of assistant messages already in the conversation.
    pub fn assistant_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("NO_SCRIPT_MATCH: no script matches turn {turn}")]
    NoScriptMatch { turn: usize },
    #[error("CACHE_MISS: no recorded response for {0}")]
    CacheMiss(String),
    #[error("HTTP_ERROR: status {status:?}: {message}")]
    Http { status: Option<u16>, message: String },
    #[error("UNKNOWN_BACKEND: {0}")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::NoScriptMatch { .. } => "NO_SCRIPT_MATCH",
            GatewayError::CacheMiss(_) => "CACHE_MISS",
            GatewayError::Http { .. } => "HTTP_ERROR",
            GatewayError::UnknownBackend(_) => "UNKNOWN_BACKEND",
            GatewayError::InvalidRequest(_) => "INVALID_REQUEST",
            GatewayError::InvalidResponse(_) => "INVALID_RESPONSE",
            GatewayError::Io(_) => "IO_ERROR",
        }
    }
}

/// A chat-completion provider. Implementations must be safe to call from
/// concurrently executing nodes.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, GatewayError>;
}

/// Routes requests to named backends by `model_ref`.
#[derive(Clone, Default)]
pub struct Gateway {
    backends: BTreeMap<String, Arc<dyn ChatBackend>>,
    fallback: Option<Arc<dyn ChatBackend>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .field("override", &self.fallback.is_some())
            .finish()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// A gateway that sends every request to `backend` regardless of model_ref.
    pub fn single(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backends: BTreeMap::new(), fallback: Some(backend) }
    }

    pub fn with_backend(mut self, name: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Self {
        self.backends.insert(name.into(), backend);
        self
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        req.check()?;
        let backend = self
            .fallback
            .as_ref()
            .or_else(|| self.backends.get(&req.model_ref))
            .ok_or_else(|| GatewayError::UnknownBackend(req.model_ref.clone()))?;
        let reply = backend.complete(req)?;
        if reply.role != Role::Assistant {
            return Err(GatewayError::InvalidResponse(format!(
                "backend replied with role {:?}",
                reply.role
            )));
        }
        reply.check().map_err(GatewayError::InvalidResponse)?;
        Ok(reply)
    }
}

/// Parses tool-call arguments produced by a model.
///
/// Strict mode accepts exactly one JSON object. Lenient mode also accepts an
/// object surrounded by other text (code fences, prose) and takes the first
/// balanced `{...}` block that parses.
pub fn parse_tool_arguments(raw: &str, strict: bool) -> Result<Map<String, Value>, GatewayError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str::<Value>(trimmed) {
        Ok(Value::Object(m)) => return Ok(m),
        Ok(other) if strict => {
            return Err(GatewayError::InvalidResponse(format!(
                "tool arguments are not an object: {other}"
            )))
        }
        Err(e) if strict => {
            return Err(GatewayError::InvalidResponse(format!("tool arguments: {e}")))
        }
        _ => {}
    }
    for (start, _) in trimmed.match_indices('{') {
        let mut depth = 0i32;
        let mut in_str = false;
        let mut escaped = false;
        for (off, c) in trimmed[start..].char_indices() {
            if in_str {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                '"' => in_str = true,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &trimmed[start..start + off + 1];
                        if let Ok(Value::Object(m)) = serde_json::from_str(candidate) {
                            return Ok(m);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    Err(GatewayError::InvalidResponse(format!("no JSON object in tool arguments: {raw:?}")))
}
