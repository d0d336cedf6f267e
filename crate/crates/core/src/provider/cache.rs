//! Append-only response cache: one UTF-8 file per request key under
//! `objects/`, plus an `index.jsonl` manifest carrying each file's checksum.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::PromptKind;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache entry {key} is corrupt: {reason}")]
    Corrupt { key: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct IndexEntry {
    key: String,
    kind: PromptKind,
    sha256: String,
    bytes: usize,
}

pub struct ResponseCache {
    dir: PathBuf,
    index: Mutex<(HashMap<String, IndexEntry>, File)>,
}

fn checksum(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ResponseCache {
    /// Opens or creates a cache directory. Unreadable manifest lines are
    /// skipped; the latest line for a key wins.
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("objects"))?;
        let index_path = dir.join("index.jsonl");
        let mut entries = HashMap::new();
        if index_path.exists() {
            for (n, line) in BufReader::new(File::open(&index_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<IndexEntry>(&line) {
                    Ok(entry) => {
                        entries.insert(entry.key.clone(), entry);
                    }
                    Err(err) => log::warn!("{}:{}: skipping index line: {err}", index_path.display(), n + 1),
                }
            }
        }
        let manifest = OpenOptions::new().create(true).append(true).open(&index_path)?;
        Ok(ResponseCache {
            dir,
            index: Mutex::new((entries, manifest)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn object_path(&self, key: &str) -> PathBuf {
        self.dir.join("objects").join(format!("{key}.txt"))
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap_or_else(|e| e.into_inner()).0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Ok(None)` when the key was never stored; `Corrupt` when the stored
    /// object is missing or fails its checksum.
    pub fn get(&self, key: &str) -> Result<Option<String>, CacheError> {
        let expected = {
            let guard = self.index.lock().unwrap_or_else(|e| e.into_inner());
            match guard.0.get(key) {
                Some(entry) => entry.sha256.clone(),
                None => return Ok(None),
            }
        };
        let corrupt = |reason: String| CacheError::Corrupt {
            key: key.to_string(),
            reason,
        };
        let text = fs::read_to_string(self.object_path(key)).map_err(|e| corrupt(e.to_string()))?;
        if checksum(&text) != expected {
            return Err(corrupt("checksum mismatch".into()));
        }
        Ok(Some(text))
    }

    pub fn put(&self, key: &str, kind: PromptKind, text: &str) -> io::Result<()> {
        if !key.chars().all(|c| c.is_ascii_alphanumeric()) || key.is_empty() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "cache key must be alphanumeric"));
        }
        let mut guard = self.index.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.object_path(key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        let entry = IndexEntry {
            key: key.to_string(),
            kind,
            sha256: checksum(text),
            bytes: text.len(),
        };
        let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
        line.push('\n');
        guard.1.write_all(line.as_bytes())?;
        guard.1.flush()?;
        guard.0.insert(entry.key.clone(), entry);
        Ok(())
    }
}
