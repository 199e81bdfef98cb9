use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunRecord;
use crate::grad::Checkpoint;
use crate::importance::ImportanceMap;

pub const CACHE_ENV: &str = "ROARBENCH_CACHE";

/// Everything needed to resume a chain from a completed iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedRun {
    pub record: RunRecord,
    pub checkpoint: Checkpoint,
    /// Masked positions per observation, in global observation order.
    pub masks: Vec<Vec<usize>>,
    /// Maps that produced this iteration's masks; absent for shared runs.
    pub importance: Option<Vec<ImportanceMap>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    key: String,
    run: CachedRun,
}

/// Hex SHA-256 over length-prefixed parts.
pub fn content_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Content-addressed store of completed runs, in memory and optionally on
/// disk (one file per key).
#[derive(Debug, Default)]
pub struct RunCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<CachedRun>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    quarantined: AtomicUsize,
}

impl RunCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), ..Self::default() }
    }

    /// Uses `$ROARBENCH_CACHE` when set, else `default`.
    pub fn from_env(default: Option<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV).map(PathBuf::from).or(default) {
            Some(dir) => Self::on_disk(dir),
            None => Self::in_memory(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    fn quarantine(&self, path: &Path, key: &str) {
        self.quarantined.fetch_add(1, Ordering::Relaxed);
        if let Some(dir) = &self.dir {
            let q = dir.join("quarantine");
            if fs::create_dir_all(&q).is_ok() && fs::rename(path, q.join(format!("{key}.json"))).is_ok() {
                return;
            }
        }
        let _ = fs::remove_file(path);
    }

    pub fn lookup(&self, key: &str) -> Option<Arc<CachedRun>> {
        if let Some(hit) = self.memory.lock().expect("cache lock").get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Some(Arc::clone(hit));
        }
        let found = self.path(key).and_then(|path| {
            let text = fs::read_to_string(&path).ok()?;
            match serde_json::from_str::<Entry>(&text) {
                Ok(entry) if entry.key == key => Some(Arc::new(entry.run)),
                _ => {
                    self.quarantine(&path, key);
                    None
                }
            }
        });
        match found {
            Some(run) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                self.memory.lock().expect("cache lock").insert(key.to_string(), Arc::clone(&run));
                Some(run)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn insert(&self, key: &str, run: CachedRun) -> std::io::Result<Arc<CachedRun>> {
        let run = Arc::new(run);
        if let Some(path) = self.path(key) {
            fs::create_dir_all(path.parent().expect("has parent"))?;
            let entry = Entry { key: key.to_string(), run: (*run).clone() };
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, serde_json::to_string(&entry).expect("entry serializes"))?;
            fs::rename(&tmp, &path)?;
        }
        self.memory.lock().expect("cache lock").insert(key.to_string(), Arc::clone(&run));
        Ok(run)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn quarantined(&self) -> usize {
        self.quarantined.load(Ordering::Relaxed)
    }
}
