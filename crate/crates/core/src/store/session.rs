use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::digest::ContentDigest;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SessionId(String);

impl SessionId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for SessionId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ok = !s.is_empty()
            && s.len() <= 64
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(Self(s.to_string()))
        } else {
            Err(StoreError::UnknownSession(s.to_string()))
        }
    }
}

impl TryFrom<String> for SessionId {
    type Error = StoreError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> Self {
        id.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    PrdPending,
    PrdReady,
    Generating,
    Reviewing,
    Complete,
    Failed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Created => "created",
            SessionState::PrdPending => "prd_pending",
            SessionState::PrdReady => "prd_ready",
            SessionState::Generating => "generating",
            SessionState::Reviewing => "reviewing",
            SessionState::Complete => "complete",
            SessionState::Failed => "failed",
        }
    }

    /// Pipeline order, with re-entry of a pending step after a failure and
    /// `complete -> reviewing` for loops grown from a branch point.
    pub fn can_move_to(self, next: SessionState) -> bool {
        use SessionState::*;
        match (self, next) {
            (_, Failed) => self != Complete,
            (Created, PrdPending) => true,
            (PrdPending, PrdPending | PrdReady) => true,
            (PrdReady, Generating) => true,
            (Generating, Generating | Reviewing | Complete) => true,
            (Reviewing, Reviewing | Complete) => true,
            (Complete, Reviewing | Complete) => true,
            (Failed, PrdPending | Generating | Reviewing) => true,
            _ => false,
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: SessionState,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub created_at: DateTime<Utc>,
    pub prompt: String,
    pub sketch_digest: ContentDigest,
    pub state: SessionState,
    pub active_head: Option<String>,
    /// Last pipeline step that finished successfully.
    #[serde(default)]
    pub last_completed_step: Option<String>,
    /// Every state entered, in order, starting with `created`.
    #[serde(default)]
    pub history: Vec<StateChange>,
    /// Degraded-mode notes such as placeholder images.
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
}
