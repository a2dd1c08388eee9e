//! Response cache: record completions once, replay them forever.
//!
//! The cache is an append-only JSONL file plus a sidecar checksum file
//! (`<path>.sha256`, one hex digest per record line). Records are keyed by
//! a cryptographic hash over everything that affects a completion —
//! provider id, model id, full message list, temperature, token budget,
//! and the reasoning flag — so any change to a request is a different key.
//! Each record also stores the request itself, which makes a cache a
//! self-contained, inspectable transcript of a run.
//!
//! Three modes: `ReadWrite` records misses, `ReadOnly` turns a miss into a
//! hard [`ProviderError::ReplayMiss`] (deterministic replay), and `Bypass`
//! disables the cache entirely. Writes are serialized; lookups are
//! concurrent.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completion, CompletionRequest, Provider, ProviderError};

/// How the cache participates in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits, call through on a miss and record the result.
    ReadWrite,
    /// Serve hits only; a miss is a hard error (replay).
    ReadOnly,
    /// Ignore the cache entirely.
    Bypass,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    provider_id: &'a str,
    #[serde(flatten)]
    request: &'a CompletionRequest,
}

/// Stable cache key: hex SHA-256 over the canonical JSON encoding of
/// (provider id, model id, messages, temperature, max output tokens,
/// reasoning flag). Changing any single field changes the key.
pub fn cache_key(provider_id: &str, request: &CompletionRequest) -> String {
    let material = KeyMaterial { provider_id, request };
    let canonical = serde_json::to_vec(&material).expect("request serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn request_digest(request: &CompletionRequest) -> String {
    let canonical = serde_json::to_vec(request).expect("request serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn line_digest(line: &str) -> String {
    hex::encode(Sha256::digest(line.as_bytes()))
}

/// The request as stored in a cache record: the provider it was sent to
/// plus the full completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRequest {
    pub provider_id: String,
    #[serde(flatten)]
    pub request: CompletionRequest,
}

/// One cache file record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub request: StoredRequest,
    /// SHA-256 of the request alone (without provider id).
    pub request_digest: String,
    pub completion: Completion,
    /// Unix seconds at record time. Informational only.
    pub stored_at: u64,
}

#[derive(Debug)]
struct Appender {
    data: File,
    sums: File,
}

/// On-disk completion cache. See the module docs for the format.
#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    mode: CacheMode,
    index: RwLock<HashMap<String, Completion>>,
    appender: Mutex<Option<Appender>>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".sha256");
    path.with_file_name(name)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ProviderError {
    ProviderError::CacheIo { path: path.display().to_string(), detail: e.to_string() }
}

impl ResponseCache {
    /// Opens a cache file in the given mode.
    ///
    /// `ReadWrite` creates the file (and its sidecar) when missing and
    /// loads any existing records; `ReadOnly` requires the file to exist;
    /// `Bypass` touches nothing.
    ///
    /// # Errors
    ///
    /// [`ProviderError::CacheIo`] on filesystem problems (including a
    /// missing file in `ReadOnly`), [`ProviderError::CacheCorrupt`] when a
    /// record fails checksum or key verification.
    pub fn open(path: impl Into<PathBuf>, mode: CacheMode) -> Result<Self, ProviderError> {
        let path = path.into();
        let mut index = HashMap::new();
        match mode {
            CacheMode::Bypass => {}
            CacheMode::ReadOnly => {
                if !path.exists() {
                    return Err(io_err(&path, "cache file not found (required in read-only mode)"));
                }
                index = Self::load_index(&path)?;
            }
            CacheMode::ReadWrite => {
                if path.exists() {
                    index = Self::load_index(&path)?;
                }
            }
        }
        let appender = match mode {
            CacheMode::ReadWrite => {
                let data = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| io_err(&path, e))?;
                let sums_path = sidecar_path(&path);
                let sums = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&sums_path)
                    .map_err(|e| io_err(&sums_path, e))?;
                Some(Appender { data, sums })
            }
            _ => None,
        };
        Ok(ResponseCache {
            path,
            mode,
            index: RwLock::new(index),
            appender: Mutex::new(appender),
        })
    }

    fn load_index(path: &Path) -> Result<HashMap<String, Completion>, ProviderError> {
        let mut index = HashMap::new();
        for record in Self::load_records(path)? {
            index.insert(record.key, record.completion);
        }
        Ok(index)
    }

    /// Reads and verifies every record in a cache file. This is also the
    /// supported way to inspect what a run actually sent: each record
    /// carries its full request.
    ///
    /// # Errors
    ///
    /// [`ProviderError::CacheIo`] when the file or its sidecar cannot be
    /// read; [`ProviderError::CacheCorrupt`] on a checksum mismatch, a
    /// record/checksum count mismatch, unparseable JSON, or a record whose
    /// stored key does not match its stored request.
    pub fn load_records(path: &Path) -> Result<Vec<CacheRecord>, ProviderError> {
        let corrupt = |record: usize, reason: String| ProviderError::CacheCorrupt {
            path: path.display().to_string(),
            record,
            reason,
        };
        let data = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let sums_path = sidecar_path(path);
        let sums = std::fs::read_to_string(&sums_path).map_err(|e| io_err(&sums_path, e))?;
        let data_lines: Vec<&str> = data.lines().collect();
        let sum_lines: Vec<&str> = sums.lines().collect();
        if data_lines.len() != sum_lines.len() {
            return Err(corrupt(
                data_lines.len().min(sum_lines.len()) + 1,
                format!(
                    "{} record(s) but {} checksum(s)",
                    data_lines.len(),
                    sum_lines.len()
                ),
            ));
        }
        let mut records = Vec::with_capacity(data_lines.len());
        for (i, (line, sum)) in data_lines.iter().zip(&sum_lines).enumerate() {
            let record_no = i + 1;
            if line_digest(line) != sum.trim() {
                return Err(corrupt(record_no, "checksum mismatch".to_string()));
            }
            let record: CacheRecord = serde_json::from_str(line)
                .map_err(|e| corrupt(record_no, format!("unparseable record: {e}")))?;
            let expected = cache_key(&record.request.provider_id, &record.request.request);
            if record.key != expected {
                return Err(corrupt(record_no, "stored key does not match stored request".into()));
            }
            records.push(record);
        }
        Ok(records)
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached completion for a key, if present. Always `None`
    /// in `Bypass` mode.
    pub fn lookup(&self, key: &str) -> Option<Completion> {
        if self.mode == CacheMode::Bypass {
            return None;
        }
        self.index.read().expect("index lock").get(key).cloned()
    }

    /// Appends one record (data line + checksum line) and indexes it.
    /// A key already present is left untouched — records are never
    /// rewritten. No-op outside `ReadWrite` mode.
    ///
    /// # Errors
    ///
    /// [`ProviderError::CacheIo`] when the append fails.
    pub fn store(
        &self,
        provider_id: &str,
        request: &CompletionRequest,
        completion: &Completion,
    ) -> Result<(), ProviderError> {
        if self.mode != CacheMode::ReadWrite {
            return Ok(());
        }
        let key = cache_key(provider_id, request);
        let mut appender = self.appender.lock().expect("appender lock");
        if self.index.read().expect("index lock").contains_key(&key) {
            return Ok(());
        }
        let record = CacheRecord {
            key: key.clone(),
            request: StoredRequest {
                provider_id: provider_id.to_string(),
                request: request.clone(),
            },
            request_digest: request_digest(request),
            completion: completion.clone(),
            stored_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        let sum = line_digest(&line);
        let out = appender.as_mut().expect("read-write cache has an appender");
        writeln!(out.data, "{line}").map_err(|e| io_err(&self.path, e))?;
        out.data.flush().map_err(|e| io_err(&self.path, e))?;
        writeln!(out.sums, "{sum}").map_err(|e| io_err(&sidecar_path(&self.path), e))?;
        out.sums.flush().map_err(|e| io_err(&sidecar_path(&self.path), e))?;
        self.index.write().expect("index lock").insert(key, completion.clone());
        Ok(())
    }
}

/// A provider wrapped with a [`ResponseCache`].
///
/// Identity is the inner provider's: a cached provider answers for the
/// same keys its inner provider would, so a cache written through one can
/// replay a run configured with the other.
pub struct CachedProvider {
    cache: Arc<ResponseCache>,
    inner: Arc<dyn Provider>,
}

impl CachedProvider {
    pub fn new(cache: Arc<ResponseCache>, inner: Arc<dyn Provider>) -> Self {
        CachedProvider { cache, inner }
    }
}

#[async_trait]
impl Provider for CachedProvider {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        match self.cache.mode() {
            CacheMode::Bypass => self.inner.complete(request).await,
            CacheMode::ReadOnly => {
                let key = cache_key(self.inner.id(), request);
                self.cache.lookup(&key).ok_or(ProviderError::ReplayMiss { key })
            }
            CacheMode::ReadWrite => {
                let key = cache_key(self.inner.id(), request);
                if let Some(hit) = self.cache.lookup(&key) {
                    return Ok(hit);
                }
                let completion = self.inner.complete(request).await?;
                self.cache.store(self.inner.id(), request, &completion)?;
                Ok(completion)
            }
        }
    }
}
