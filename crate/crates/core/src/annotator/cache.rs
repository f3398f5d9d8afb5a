use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::ChatRequest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub cache_key: String,
    pub request_digest: String,
    pub model_name: String,
    pub template_id: String,
    pub raw_response: String,
}

/// Content-addressed response store: one JSON file per cache key.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.cache_key == key => Some(entry),
            _ => {
                log::warn!("ignoring corrupt cache entry {key}");
                None
            }
        }
    }

    /// Writes to a temporary file in the cache directory, then renames it
    /// into place.
    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        let target = self.path_for(&entry.cache_key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let json = serde_json::to_vec_pretty(entry)?;
        tmp.write_all(&json).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&target)
            .map_err(|e| Error::io(&target, e.error))?;
        Ok(())
    }
}

/// Hash of everything that determines a response: template, model, prompt
/// text and image bytes.
pub fn cache_key(template_id: &str, model_name: &str, request: &ChatRequest) -> String {
    let mut h = Sha256::new();
    for part in [template_id, model_name] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    for m in &request.messages {
        let role = serde_json::to_string(&m.role).unwrap_or_default();
        h.update(role.as_bytes());
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    for img in &request.images {
        h.update(b"image");
        h.update(Sha256::digest(&img.bytes));
    }
    hex::encode(h.finalize())
}

pub fn request_digest(request: &ChatRequest) -> String {
    let wire = serde_json::to_vec(&request.to_wire()).unwrap_or_default();
    hex::encode(Sha256::digest(&wire))
}
