//! Append-only JSONL response cache.
//!
//! Each line is `{key, request, <payload fields>, backend, timestamp}`.
//! Loading replays the file in order, so a repeated key resolves to the last
//! line written. A torn final line (crash mid-append) is skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Remote => "remote",
            BackendKind::Mock => "mock",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "mock" => Ok(BackendKind::Mock),
            other => Err(Error::InvalidArgument(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPayload {
    pub embedding: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine<V> {
    key: String,
    request: Value,
    #[serde(flatten)]
    payload: V,
    backend: BackendKind,
    timestamp: u64,
}

pub struct JsonlCache<V> {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, V>>,
    writer: Mutex<Option<File>>,
}

impl<V> JsonlCache<V>
where
    V: Clone + Serialize + DeserializeOwned,
{
    /// A cache that never touches disk.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the cache file and replays it.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let cache = Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(Self::replay(path)?),
            writer: Mutex::new(None),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        *cache.writer.lock().unwrap() = Some(file);
        Ok(cache)
    }

    fn replay(path: &Path) -> Result<HashMap<String, V>> {
        let mut entries = HashMap::new();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(entries),
            Err(e) => return Err(Error::io(path, e)),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheLine<V>>(&line) {
                Ok(rec) => {
                    entries.insert(rec.key, rec.payload);
                }
                Err(e) => tracing::warn!(path = %path.display(), line = i + 1, "ignoring cache line: {e}"),
            }
        }
        Ok(entries)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, request: Value, payload: V, backend: BackendKind) -> Result<()> {
        let mut writer = self.writer.lock().unwrap();
        if let (Some(file), Some(path)) = (writer.as_mut(), self.path.as_ref()) {
            let timestamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let line = CacheLine {
                key: key.to_string(),
                request,
                payload: payload.clone(),
                backend,
                timestamp,
            };
            let mut buf = serde_json::to_vec(&line).map_err(|e| Error::Cache {
                path: path.clone(),
                message: e.to_string(),
            })?;
            buf.push(b'\n');
            file.write_all(&buf).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries.write().unwrap().insert(key.to_string(), payload);
        Ok(())
    }

    /// Drops the in-memory view and replays the backing file.
    pub fn reload(&self) -> Result<()> {
        let fresh = match &self.path {
            Some(p) => Self::replay(p)?,
            None => HashMap::new(),
        };
        *self.entries.write().unwrap() = fresh;
        Ok(())
    }
}
