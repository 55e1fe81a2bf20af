use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 over judge kind, model name and the rendered prompt.
pub fn cache_key(kind: &str, model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [kind, model, prompt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub prompt: String,
    pub response: String,
    pub judge: String,
    pub timestamp: u64,
}

/// Prompt-level response cache, persisted as append-only JSONL.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or prepares to create) a cache file. Later lines win on
    /// duplicate keys.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| Error::load(path.display().to_string(), format!("line {}: {e}", lineno + 1)))?;
                entries.insert(entry.key.clone(), entry);
            }
        }
        Ok(ResponseCache { path: Some(path), entries })
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts entries in the given order and appends them to the file.
    pub fn insert_all(&mut self, new: Vec<(String, String, String, String)>) -> Result<()> {
        if new.is_empty() {
            return Ok(());
        }
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut file = match &self.path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                Some(
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .map_err(|e| Error::io(p, e))?,
                )
            }
            None => None,
        };
        for (key, prompt, response, judge) in new {
            let entry = CacheEntry {
                key: key.clone(),
                prompt,
                response,
                judge,
                timestamp,
            };
            if let (Some(f), Some(p)) = (file.as_mut(), &self.path) {
                let mut line = serde_json::to_string(&entry)?;
                line.push('\n');
                f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e))?;
            }
            self.entries.insert(key, entry);
        }
        Ok(())
    }
}
