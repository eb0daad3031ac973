//! Chat-completions compatible HTTP backend.
//!
//! `POST {base_url}/chat/completions` with a bearer token taken from
//! `MARCO_API_KEY`. The base URL comes from the config or `MARCO_BASE_URL`.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{parse_tool_arguments, ChatBackend, ChatMessage, CompletionRequest, GatewayError, Role, ToolCallRequest};
use crate::toolkit::ToolDescriptor;

pub const API_KEY_ENV: &str = "MARCO_API_KEY";
pub const BASE_URL_ENV: &str = "MARCO_BASE_URL";

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    /// Model name sent on the wire.
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Reject tool arguments that are not exactly one JSON object.
    pub strict_tool_args: bool,
    pub retry_delay: Duration,
}

impl HttpSettings {
    /// Settings from explicit values with environment fallbacks.
    pub fn from_env(base_url: Option<&str>, model: &str) -> Result<Self, GatewayError> {
        let base_url = base_url
            .map(str::to_string)
            .or_else(|| std::env::var(BASE_URL_ENV).ok())
            .ok_or_else(|| {
                GatewayError::InvalidRequest(format!("no base_url configured and {BASE_URL_ENV} unset"))
            })?;
        Ok(Self {
            base_url,
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout: Duration::from_secs(120),
            strict_tool_args: false,
            retry_delay: Duration::from_millis(500),
        })
    }
}

pub struct HttpBackend {
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(settings.timeout)).build();
        Self { agent: config.into(), settings }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'))
    }

    fn post_once(&self, body: &Value) -> Result<Value, GatewayError> {
        let mut req = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(status) => {
                GatewayError::Http { status: Some(status), message: "request rejected".into() }
            }
            other => GatewayError::Http { status: None, message: other.to_string() },
        })?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| GatewayError::InvalidResponse(e.to_string()))
    }
}

fn retryable(err: &GatewayError) -> bool {
    match err {
        GatewayError::Http { status: None, .. } => true,
        GatewayError::Http { status: Some(s), .. } => *s == 429 || *s >= 500,
        _ => false,
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let body = to_wire(&self.settings.model, req);
        let raw = match self.post_once(&body) {
            Err(e) if retryable(&e) => {
                tracing::warn!("chat completion failed ({e}); retrying once");
                std::thread::sleep(self.settings.retry_delay);
                self.post_once(&body)?
            }
            other => other?,
        };
        from_wire(&raw, self.settings.strict_tool_args)
    }
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

fn tool_to_wire(tool: &ToolDescriptor) -> Value {
    let mut props = Map::new();
    let mut required = Vec::new();
    for p in &tool.params {
        let mut schema = p.kind.json_schema();
        schema.insert("description".into(), json!(p.doc));
        props.insert(p.name.clone(), Value::Object(schema));
        if p.required {
            required.push(Value::String(p.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {
                "type": "object",
                "properties": props,
                "required": required,
                "additionalProperties": false,
            }
        }
    })
}

/// Request body in chat-completions wire form.
pub fn to_wire(model: &str, req: &CompletionRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let mut o = Map::new();
            o.insert("role".into(), json!(role_str(m.role)));
            o.insert("content".into(), json!(m.content));
            if let Some(name) = &m.name {
                o.insert("name".into(), json!(name));
            }
            if !m.tool_calls.is_empty() {
                let calls: Vec<Value> = m
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.id,
                            "type": "function",
                            "function": {
                                "name": c.tool_name,
                                "arguments": Value::Object(c.arguments.clone()).to_string(),
                            }
                        })
                    })
                    .collect();
                o.insert("tool_calls".into(), Value::Array(calls));
            }
            if let Some(id) = &m.tool_call_id {
                o.insert("tool_call_id".into(), json!(id));
            }
            Value::Object(o)
        })
        .collect();
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": req.temperature,
    });
    if !req.tool_specs.is_empty() {
        body["tools"] = Value::Array(req.tool_specs.iter().map(tool_to_wire).collect());
    }
    body
}

/// Extracts the first choice's assistant message from a response body.
pub fn from_wire(body: &Value, strict_tool_args: bool) -> Result<ChatMessage, GatewayError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::InvalidResponse("response has no choices[0].message".into()))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut out = ChatMessage::assistant(content);
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let id = call.get("id").and_then(Value::as_str).unwrap_or_default();
            let f = call.get("function").unwrap_or(&Value::Null);
            let name = f.get("name").and_then(Value::as_str).ok_or_else(|| {
                GatewayError::InvalidResponse("tool call without function name".into())
            })?;
            let arguments = match f.get("arguments") {
                Some(Value::String(s)) => parse_tool_arguments(s, strict_tool_args)?,
                Some(Value::Object(m)) => m.clone(),
                _ => Map::new(),
            };
            out.tool_calls.push(ToolCallRequest {
                id: id.to_string(),
                tool_name: name.to_string(),
                arguments,
            });
        }
    }
    Ok(out)
}
