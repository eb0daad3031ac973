//! Deterministic scripted backend.

use std::path::Path;
use std::sync::Mutex;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, CompletionRequest, GatewayError, Role};

/// Predicate deciding whether a script answers a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Substring of the most recent message, whatever its role.
    LastMessageContains(String),
    /// Substring of the most recent user message. Stays stable across tool
    /// round-trips, so one script can drive a whole node conversation.
    LastUserContains(String),
    /// Number of assistant messages already in the request.
    TurnIndex(usize),
    Always,
}

impl Matcher {
    pub fn matches(&self, req: &CompletionRequest) -> bool {
        match self {
            Matcher::LastMessageContains(s) => {
                req.messages.last().is_some_and(|m| m.content.contains(s.as_str()))
            }
            Matcher::LastUserContains(s) => req
                .messages
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .is_some_and(|m| m.content.contains(s.as_str())),
            Matcher::TurnIndex(n) => req.assistant_turns() == *n,
            Matcher::Always => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Script {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    /// Replies handed out one per successful match, in order.
    pub responses: Vec<ChatMessage>,
}

/// On-disk script format: `{"scripts": [{"match": ..., "responses": [...]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScriptFile {
    pub scripts: Vec<Script>,
}

impl ScriptFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ScriptFile = serde_json::from_str(&text)?;
        for (i, s) in file.scripts.iter().enumerate() {
            for (j, r) in s.responses.iter().enumerate() {
                if r.role != Role::Assistant {
                    anyhow::bail!("scripts[{i}].responses[{j}]: role must be assistant");
                }
                r.check().map_err(|e| anyhow::anyhow!("scripts[{i}].responses[{j}]: {e}"))?;
            }
        }
        Ok(file)
    }
}

pub type ScriptId = usize;

struct Slot {
    script: Script,
    cursor: usize,
}

/// Scripts are tried in registration order. A script whose replies are used
/// up no longer matches; when nothing matches the call fails with
/// `NO_SCRIPT_MATCH`.
#[derive(Default)]
pub struct MockBackend {
    slots: Mutex<Vec<Slot>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(file: ScriptFile) -> Self {
        let backend = Self::new();
        for s in file.scripts {
            backend.register_script(s.matcher, s.responses);
        }
        backend
    }

    pub fn register_script(&self, matcher: Matcher, responses: Vec<ChatMessage>) -> ScriptId {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        slots.push(Slot { script: Script { matcher, responses }, cursor: 0 });
        slots.len() - 1
    }

    /// Replies not yet handed out, per script.
    pub fn remaining(&self) -> Vec<usize> {
        let slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        slots.iter().map(|s| s.script.responses.len() - s.cursor).collect()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        for slot in slots.iter_mut() {
            if slot.cursor < slot.script.responses.len() && slot.script.matcher.matches(req) {
                let reply = slot.script.responses[slot.cursor].clone();
                slot.cursor += 1;
                return Ok(reply);
            }
        }
        Err(GatewayError::NoScriptMatch { turn: req.assistant_turns() })
    }
}
