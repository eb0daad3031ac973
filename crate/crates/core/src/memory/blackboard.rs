use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::MemoryError;

/// Producer name for artifacts seeded from the run configuration.
pub const INPUT_PRODUCER: &str = "@input";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Artifact {
    /// Text (a JSON string) or a structured payload.
    pub value: Value,
    pub producer: String,
    /// Starts at 1 and increases by one per write of the key.
    pub version: u64,
}

/// Shared, versioned key-value store carrying knowledge between nodes.
///
/// Writes are accepted only for keys the producer declared as outputs.
/// Every read and write is atomic per key.
#[derive(Debug, Default)]
pub struct Blackboard {
    entries: RwLock<BTreeMap<String, Artifact>>,
    declared: RwLock<BTreeMap<String, BTreeSet<String>>>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the output keys `producer` may write. Repeated calls extend
    /// the declaration.
    pub fn declare<I, S>(&self, producer: &str, outputs: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut declared = self.declared.write().unwrap_or_else(|e| e.into_inner());
        declared.entry(producer.to_string()).or_default().extend(outputs.into_iter().map(Into::into));
    }

    pub fn is_declared(&self, producer: &str, key: &str) -> bool {
        let declared = self.declared.read().unwrap_or_else(|e| e.into_inner());
        declared.get(producer).is_some_and(|keys| keys.contains(key))
    }

    /// Writes `value` under `key`, returning the new version.
    pub fn write_artifact(&self, key: &str, value: Value, producer: &str) -> Result<u64, MemoryError> {
        if !self.is_declared(producer, key) {
            return Err(MemoryError::UndeclaredOutput { producer: producer.into(), key: key.into() });
        }
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        let version = entries.get(key).map_or(1, |a| a.version + 1);
        entries.insert(key.to_string(), Artifact { value, producer: producer.to_string(), version });
        Ok(version)
    }

    pub fn read_artifact(&self, key: &str) -> Result<Artifact, MemoryError> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries.get(key).cloned().ok_or_else(|| MemoryError::KeyAbsent(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).contains_key(key)
    }

    pub fn keys(&self) -> Vec<String> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn snapshot(&self) -> BTreeMap<String, Artifact> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
