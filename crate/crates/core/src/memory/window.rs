use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Eviction {
    #[default]
    DropOldestNonsystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct MemoryWindow {
    pub max_messages: usize,
    #[serde(default)]
    pub eviction: Eviction,
}

/// Keeps every system message plus the newest non-system messages that fit
/// in `max_messages`, in their original order. If the system messages alone
/// exceed the window they are still all kept.
pub fn apply_window(messages: &[ChatMessage], window: &MemoryWindow) -> Vec<ChatMessage> {
    let system = messages.iter().filter(|m| m.role == Role::System).count();
    let budget = window.max_messages.saturating_sub(system);
    let non_system = messages.len() - system;
    let mut skip = non_system.saturating_sub(budget);
    messages
        .iter()
        .filter(|m| {
            if m.role == Role::System {
                return true;
            }
            if skip > 0 {
                skip -= 1;
                return false;
            }
            true
        })
        .cloned()
        .collect()
}
