//! Record/replay cache keyed by the canonical request digest.
//!
//! Layout: one file per digest, `<dir>/<digest>.json`, holding the canonical
//! request and the recorded response.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{canonical_hash, ChatBackend, ChatMessage, CompletionRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub request: Value,
    pub response: ChatMessage,
}

pub struct ReplayBackend {
    dir: PathBuf,
    recorder: Option<Arc<dyn ChatBackend>>,
    write_lock: Mutex<()>,
}

impl ReplayBackend {
    /// Serves only what is already on disk; anything else is `CACHE_MISS`.
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), recorder: None, write_lock: Mutex::new(()) }
    }

    /// Serves hits from disk and forwards misses to `inner`, recording the
    /// reply. Each digest is written at most once.
    pub fn recording(dir: impl Into<PathBuf>, inner: Arc<dyn ChatBackend>) -> Self {
        Self { dir: dir.into(), recorder: Some(inner), write_lock: Mutex::new(()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    fn read_entry(path: &Path) -> Result<Option<CacheEntry>, GatewayError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| GatewayError::InvalidResponse(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, GatewayError> {
        let digest = canonical_hash(req);
        let path = self.entry_path(&digest);
        if let Some(entry) = Self::read_entry(&path)? {
            return Ok(entry.response);
        }
        let Some(inner) = &self.recorder else {
            return Err(GatewayError::CacheMiss(digest));
        };
        let response = inner.complete(req)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(entry) = Self::read_entry(&path)? {
            // Another caller recorded the same digest first.
            return Ok(entry.response);
        }
        fs::create_dir_all(&self.dir)?;
        let entry = CacheEntry {
            digest: digest.clone(),
            request: serde_json::to_value(req).expect("request serializes"),
            response: response.clone(),
        };
        let text = serde_json::to_string_pretty(&entry).expect("entry serializes");
        let tmp = self.dir.join(format!("{digest}.json.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(response)
    }
}
