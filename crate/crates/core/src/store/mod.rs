//! Per-session shared memory and the version tree, persisted as plain
//! files:
//!
//! ```text
//! sessions/<id>/meta.json
//! sessions/<id>/memory/<key>
//! sessions/<id>/memory.meta/<key>.json
//! sessions/<id>/versions/<label>/{index.html, meta.json, critique.json}
//! ```
//!
//! Every file is written to a temporary name and renamed into place, and a
//! version directory is assembled aside and renamed as a whole, so readers
//! never see partial data. Mutations of one session are serialized by a
//! per-session lock; a separate busy flag marks a long-running pipeline
//! step so that branching cannot interleave with it.

mod session;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::WebsiteArtifact;
use crate::critic::{CritiqueReport, SuggestionCategory};
use crate::digest::ContentDigest;

pub use session::{Session, SessionId, SessionState, StateChange};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("key {0} not found")]
    KeyNotFound(String),
    #[error("key {0} is outside this session's namespace")]
    NamespaceViolation(String),
    #[error("unknown parent version {0}")]
    UnknownParent(String),
    #[error("the version tree already has a root")]
    RootAlreadyExists,
    #[error("unknown version {0}")]
    UnknownVersion(String),
    #[error("session {0} has a pipeline step in progress")]
    BranchBusy(String),
    #[error("session cannot move from {from} to {to}")]
    InvalidTransition { from: SessionState, to: SessionState },
    #[error("stored artifact {0} no longer matches its digest")]
    DigestMismatch(String),
    #[error("storage error: {0}")]
    Io(String),
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatedBy {
    CodeAgent,
    CriticAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionNode {
    pub label: String,
    pub parent: Option<String>,
    pub artifact_digest: ContentDigest,
    /// Memory key of the critique that motivated this version.
    pub critique_ref: Option<String>,
    pub created_by: CreatedBy,
    pub created_at: DateTime<Utc>,
}

impl VersionNode {
    /// Creation index parsed from the `v<N>` label.
    pub fn index(&self) -> usize {
        label_index(&self.label).unwrap_or(usize::MAX)
    }
}

fn label_index(label: &str) -> Option<usize> {
    label.strip_prefix('v')?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueSummary {
    pub suggestions: usize,
    pub categories: Vec<SuggestionCategory>,
}

/// One row of [`SessionStore::list_versions`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionSummary {
    #[serde(flatten)]
    pub node: VersionNode,
    /// Latest review of this version, if it has been reviewed.
    pub critique: Option<CritiqueSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryEntry {
    pub bytes: Vec<u8>,
    pub media_type: String,
    pub written_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    media_type: String,
    written_at: DateTime<Utc>,
}

/// Releases the session's busy flag on drop.
#[derive(Debug)]
pub struct BusyGuard {
    busy: Arc<Mutex<HashSet<SessionId>>>,
    id: SessionId,
}

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.busy.lock().remove(&self.id);
    }
}

pub struct SessionStore {
    root: PathBuf,
    locks: Mutex<HashMap<SessionId, Arc<Mutex<()>>>>,
    busy: Arc<Mutex<HashSet<SessionId>>>,
}

impl SessionStore {
    /// Open (or create) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root, locks: Mutex::new(HashMap::new()), busy: Arc::new(Mutex::new(HashSet::new())) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &SessionId) -> PathBuf {
        self.root.join("sessions").join(id.as_str())
    }

    pub fn version_dir(&self, id: &SessionId, label: &str) -> PathBuf {
        self.session_dir(id).join("versions").join(label)
    }

    fn lock_for(&self, id: &SessionId) -> Arc<Mutex<()>> {
        self.locks.lock().entry(id.clone()).or_default().clone()
    }

    fn ensure_exists(&self, id: &SessionId) -> Result<(), StoreError> {
        if self.session_dir(id).join("meta.json").is_file() {
            Ok(())
        } else {
            Err(StoreError::UnknownSession(id.to_string()))
        }
    }

    // ---- sessions -------------------------------------------------------

    pub fn create_session(&self, prompt: &str, sketch_digest: ContentDigest) -> Result<Session, StoreError> {
        let id = SessionId::generate();
        let now = Utc::now();
        let session = Session {
            id: id.clone(),
            created_at: now,
            prompt: prompt.to_string(),
            sketch_digest,
            state: SessionState::Created,
            active_head: None,
            last_completed_step: None,
            history: vec![StateChange { state: SessionState::Created, at: now }],
            warnings: Vec::new(),
            error: None,
        };
        let dir = self.session_dir(&id);
        fs::create_dir_all(dir.join("memory"))?;
        fs::create_dir_all(dir.join("versions"))?;
        write_json(&dir.join("meta.json"), &session)?;
        Ok(session)
    }

    pub fn session(&self, id: &SessionId) -> Result<Session, StoreError> {
        let path = self.session_dir(id).join("meta.json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::UnknownSession(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn list_sessions(&self) -> Result<Vec<SessionId>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("sessions"))? {
            let entry = entry?;
            if let Some(id) = entry.file_name().to_str().and_then(|n| n.parse::<SessionId>().ok()) {
                if entry.path().join("meta.json").is_file() {
                    ids.push(id);
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Read-modify-write of the session record under the session lock.
    pub fn update_session<T>(
        &self,
        id: &SessionId,
        f: impl FnOnce(&mut Session) -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let lock = self.lock_for(id);
        let _held = lock.lock();
        let mut session = self.session(id)?;
        let out = f(&mut session)?;
        write_json(&self.session_dir(id).join("meta.json"), &session)?;
        Ok(out)
    }

    /// Move the session to `to`, recording the change in its history.
    pub fn transition(&self, id: &SessionId, to: SessionState) -> Result<Session, StoreError> {
        self.update_session(id, |s| {
            if !s.state.can_move_to(to) {
                return Err(StoreError::InvalidTransition { from: s.state, to });
            }
            apply_transition(s, to);
            Ok(s.clone())
        })
    }

    /// Mark the session failed with a reason. Completed sessions stay
    /// complete.
    pub fn fail(&self, id: &SessionId, reason: &str) -> Result<Session, StoreError> {
        self.update_session(id, |s| {
            if s.state.can_move_to(SessionState::Failed) {
                apply_transition(s, SessionState::Failed);
            }
            s.error = Some(reason.to_string());
            Ok(s.clone())
        })
    }

    /// Claim the session for a long-running step. Fails with `BranchBusy`
    /// while another claim is alive.
    pub fn try_claim(&self, id: &SessionId) -> Result<BusyGuard, StoreError> {
        self.ensure_exists(id)?;
        let mut busy = self.busy.lock();
        if !busy.insert(id.clone()) {
            return Err(StoreError::BranchBusy(id.to_string()));
        }
        Ok(BusyGuard { busy: self.busy.clone(), id: id.clone() })
    }

    pub fn is_busy(&self, id: &SessionId) -> bool {
        self.busy.lock().contains(id)
    }

    // ---- shared memory --------------------------------------------------

    /// Resolve `key` to a path inside the session's memory directory.
    /// Keys are `/`-separated segments of `[A-Za-z0-9._-]`, optionally
    /// qualified as `sessions/<id>/<key>` with this session's id.
    fn memory_path(&self, id: &SessionId, key: &str, dir: &str) -> Result<PathBuf, StoreError> {
        let local = match key.strip_prefix("sessions/") {
            Some(rest) => {
                let (owner, local) = rest.split_once('/').ok_or_else(|| StoreError::NamespaceViolation(key.into()))?;
                if owner != id.as_str() {
                    return Err(StoreError::NamespaceViolation(key.into()));
                }
                local
            }
            None => key,
        };
        let valid = !local.is_empty()
            && local.split('/').all(|seg| {
                !seg.is_empty()
                    && !seg.starts_with('.')
                    && seg.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
            });
        if !valid {
            return Err(StoreError::NamespaceViolation(key.into()));
        }
        Ok(self.session_dir(id).join(dir).join(local))
    }

    pub fn put(&self, id: &SessionId, key: &str, bytes: &[u8], media_type: &str) -> Result<(), StoreError> {
        let path = self.memory_path(id, key, "memory")?;
        let meta_path = meta_sidecar(self.memory_path(id, key, "memory.meta")?);
        self.ensure_exists(id)?;
        let lock = self.lock_for(id);
        let _held = lock.lock();
        write_atomic(&path, bytes)?;
        write_json(&meta_path, &EntryMeta { media_type: media_type.to_string(), written_at: Utc::now() })?;
        Ok(())
    }

    pub fn get(&self, id: &SessionId, key: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.memory_path(id, key, "memory")?;
        self.ensure_exists(id)?;
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound || e.kind() == io::ErrorKind::IsADirectory => {
                Err(StoreError::KeyNotFound(key.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn get_entry(&self, id: &SessionId, key: &str) -> Result<MemoryEntry, StoreError> {
        let bytes = self.get(id, key)?;
        let meta_path = meta_sidecar(self.memory_path(id, key, "memory.meta")?);
        let meta: EntryMeta = read_json(&meta_path)?;
        Ok(MemoryEntry { bytes, media_type: meta.media_type, written_at: meta.written_at })
    }

    pub fn contains(&self, id: &SessionId, key: &str) -> bool {
        self.memory_path(id, key, "memory").map(|p| p.is_file()).unwrap_or(false)
    }

    // ---- version tree ---------------------------------------------------

    /// Add a version under `parent` (or as the root) and make it the head.
    pub fn commit_version(
        &self,
        id: &SessionId,
        parent: Option<&str>,
        html: &str,
        created_by: CreatedBy,
        critique_ref: Option<String>,
    ) -> Result<VersionNode, StoreError> {
        self.ensure_exists(id)?;
        let lock = self.lock_for(id);
        let _held = lock.lock();
        let nodes = self.read_nodes(id)?;
        match parent {
            None if !nodes.is_empty() => return Err(StoreError::RootAlreadyExists),
            Some(p) if !nodes.iter().any(|n| n.label == p) => return Err(StoreError::UnknownParent(p.to_string())),
            _ => {}
        }
        let node = VersionNode {
            label: format!("v{}", nodes.len()),
            parent: parent.map(str::to_string),
            artifact_digest: ContentDigest::of(html.as_bytes()),
            critique_ref,
            created_by,
            created_at: Utc::now(),
        };
        let versions = self.session_dir(id).join("versions");
        let staging = versions.join(format!(".staging-{}", uuid::Uuid::new_v4().simple()));
        fs::create_dir_all(&staging)?;
        fs::write(staging.join("index.html"), html)?;
        fs::write(staging.join("meta.json"), serde_json::to_vec_pretty(&node).map_err(io::Error::other)?)?;
        fs::rename(&staging, versions.join(&node.label))?;

        let mut session = self.session(id)?;
        session.active_head = Some(node.label.clone());
        write_json(&self.session_dir(id).join("meta.json"), &session)?;
        Ok(node)
    }

    fn read_nodes(&self, id: &SessionId) -> Result<Vec<VersionNode>, StoreError> {
        let dir = self.session_dir(id).join("versions");
        let mut nodes = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(nodes),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if label_index(name).is_none() {
                continue;
            }
            nodes.push(read_json::<VersionNode>(&entry.path().join("meta.json"))?);
        }
        nodes.sort_by_key(VersionNode::index);
        Ok(nodes)
    }

    pub fn node(&self, id: &SessionId, label: &str) -> Result<VersionNode, StoreError> {
        self.ensure_exists(id)?;
        if label_index(label).is_none() {
            return Err(StoreError::UnknownVersion(label.to_string()));
        }
        let path = self.version_dir(id, label).join("meta.json");
        if !path.is_file() {
            return Err(StoreError::UnknownVersion(label.to_string()));
        }
        read_json(&path)
    }

    /// Nodes in creation order.
    pub fn nodes(&self, id: &SessionId) -> Result<Vec<VersionNode>, StoreError> {
        self.ensure_exists(id)?;
        self.read_nodes(id)
    }

    /// The stored document for `label`, verified against its digest.
    pub fn artifact(&self, id: &SessionId, label: &str) -> Result<WebsiteArtifact, StoreError> {
        let node = self.node(id, label)?;
        let html = fs::read_to_string(self.version_dir(id, label).join("index.html"))?;
        let artifact = WebsiteArtifact::new(label, html);
        if artifact.byte_digest() != &node.artifact_digest {
            return Err(StoreError::DigestMismatch(label.to_string()));
        }
        Ok(artifact)
    }

    /// Labels from the root down to `label`.
    pub fn path_to(&self, id: &SessionId, label: &str) -> Result<Vec<String>, StoreError> {
        let nodes = self.nodes(id)?;
        let by_label: HashMap<&str, &VersionNode> = nodes.iter().map(|n| (n.label.as_str(), n)).collect();
        let mut path = Vec::new();
        let mut cursor = Some(label);
        while let Some(l) = cursor {
            let node = by_label.get(l).ok_or_else(|| StoreError::UnknownVersion(l.to_string()))?;
            path.push(node.label.clone());
            if path.len() > nodes.len() {
                return Err(StoreError::Corrupt { path: l.to_string(), reason: "cycle in version parents".into() });
            }
            cursor = node.parent.as_deref();
        }
        path.reverse();
        Ok(path)
    }

    /// Point the head at an existing version so the next loop grows a new
    /// branch from it.
    pub fn branch_from(&self, id: &SessionId, label: &str) -> Result<Session, StoreError> {
        self.node(id, label)?;
        if self.is_busy(id) {
            return Err(StoreError::BranchBusy(id.to_string()));
        }
        self.update_session(id, |s| {
            s.active_head = Some(label.to_string());
            Ok(s.clone())
        })
    }

    pub fn list_versions(&self, id: &SessionId) -> Result<Vec<VersionSummary>, StoreError> {
        let nodes = self.nodes(id)?;
        nodes
            .into_iter()
            .map(|node| {
                let path = self.version_dir(id, &node.label).join("critique.json");
                let critique = if path.is_file() {
                    let report: CritiqueReport = read_json(&path)?;
                    Some(CritiqueSummary {
                        suggestions: report.suggestions.len(),
                        categories: report.suggestions.iter().map(|s| s.category).collect(),
                    })
                } else {
                    None
                };
                Ok(VersionSummary { node, critique })
            })
            .collect()
    }

    // ---- critiques ------------------------------------------------------

    /// Persist a review: under `critiques/<n>` in memory and as the
    /// reviewed version's `critique.json`. Returns the memory key.
    pub fn save_critique(&self, id: &SessionId, report: &CritiqueReport) -> Result<String, StoreError> {
        self.node(id, &report.version_reviewed)?;
        let key = format!("critiques/{}.json", self.critique_count(id)?);
        let bytes = serde_json::to_vec_pretty(report).map_err(io::Error::other)?;
        self.put(id, &key, &bytes, "application/json")?;
        write_atomic(&self.version_dir(id, &report.version_reviewed).join("critique.json"), &bytes)?;
        Ok(key)
    }

    pub fn critique(&self, id: &SessionId, key: &str) -> Result<CritiqueReport, StoreError> {
        let bytes = self.get(id, key)?;
        serde_json::from_slice(&bytes).map_err(|e| corrupt(Path::new(key), e))
    }

    /// Number of reviews stored for the session so far.
    pub fn critique_count(&self, id: &SessionId) -> Result<usize, StoreError> {
        let dir = self.memory_path(id, "critiques", "memory")?;
        match fs::read_dir(dir) {
            Ok(entries) => Ok(entries
                .filter_map(Result::ok)
                .filter(|e| e.file_name().to_str().is_some_and(|n| n.ends_with(".json")))
                .count()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }
}

fn meta_sidecar(path: PathBuf) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

fn apply_transition(s: &mut Session, to: SessionState) {
    s.state = to;
    s.history.push(StateChange { state: to, at: Utc::now() });
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt { path: path.display().to_string(), reason: e.to_string() }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let parent = path.parent().ok_or_else(|| StoreError::Io(format!("{} has no parent", path.display())))?;
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".tmp-{}", uuid::Uuid::new_v4().simple()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| corrupt(path, e))
}
