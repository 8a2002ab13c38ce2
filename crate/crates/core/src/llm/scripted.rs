//! Deterministic backend that replays canned responses.
//!
//! A script file is JSON, either a bare array of responses (served in order)
//! or an object:
//!
//! ```json
//! {
//!   "model": "scripted",
//!   "by_hash": { "<sha256 hex of prompt>": "SELECT 1" },
//!   "rules": [
//!     { "kind": "generation", "contains": ["How many singers"],
//!       "responses": [" count(*) FROM singer"], "repeat_last": true }
//!   ],
//!   "responses": ["fallback, served in order"]
//! }
//! ```
//!
//! Lookup order is `by_hash`, then the first rule whose `kind` matches (if
//! given) and whose `contains` strings all occur in the prompt and which
//! still has a response left, then the ordered `responses` queue. A response
//! is either a string or `{"error": "transient" | "refusal" | "token_limit",
//! "message": "..."}`.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest};
use crate::prompt::PromptKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedFailure {
    Transient,
    Refusal,
    TokenLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    Error {
        error: ScriptedFailure,
        #[serde(default)]
        message: String,
    },
}

impl ScriptEntry {
    pub fn text(s: impl Into<String>) -> Self {
        ScriptEntry::Text(s.into())
    }

    pub fn transient(message: impl Into<String>) -> Self {
        ScriptEntry::Error {
            error: ScriptedFailure::Transient,
            message: message.into(),
        }
    }

    pub fn refusal(message: impl Into<String>) -> Self {
        ScriptEntry::Error {
            error: ScriptedFailure::Refusal,
            message: message.into(),
        }
    }

    fn into_reply(self) -> Result<BackendReply, BackendError> {
        match self {
            ScriptEntry::Text(text) => Ok(BackendReply { text, usage: None }),
            ScriptEntry::Error { error, message } => Err(match error {
                ScriptedFailure::Transient => BackendError::Transient(message),
                ScriptedFailure::Refusal => BackendError::Refusal(message),
                ScriptedFailure::TokenLimit => BackendError::TokenLimit(message),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub responses: Vec<ScriptEntry>,
    #[serde(default)]
    pub repeat_last: bool,
}

impl ScriptRule {
    fn matches(&self, request: &CompletionRequest) -> bool {
        self.kind.is_none_or(|k| k == request.prompt.kind)
            && self
                .contains
                .iter()
                .all(|needle| request.prompt.text.contains(needle.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_hash: BTreeMap<String, ScriptEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptSource {
    Queue(Vec<ScriptEntry>),
    Full(ScriptFile),
}

impl ScriptFile {
    pub fn queue(entries: Vec<ScriptEntry>) -> Self {
        Self {
            responses: entries,
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(match serde_json::from_str(text)? {
            ScriptSource::Queue(responses) => Self::queue(responses),
            ScriptSource::Full(file) => file,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }
}

/// SHA-256 hex digest of a prompt's text, the key used by `by_hash`.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug)]
struct Cursor {
    queue: VecDeque<ScriptEntry>,
    rule_pos: Vec<usize>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    model: String,
    by_hash: BTreeMap<String, ScriptEntry>,
    rules: Vec<ScriptRule>,
    cursor: Mutex<Cursor>,
}

impl ScriptedBackend {
    pub fn from_script(script: ScriptFile) -> Self {
        Self {
            model: script.model.unwrap_or_else(|| "scripted".to_string()),
            cursor: Mutex::new(Cursor {
                queue: script.responses.into(),
                rule_pos: vec![0; script.rules.len()],
            }),
            by_hash: script.by_hash,
            rules: script.rules,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::from_script(ScriptFile::load(path)?))
    }

    fn next_entry(&self, request: &CompletionRequest) -> Option<ScriptEntry> {
        if let Some(hit) = self.by_hash.get(&prompt_hash(&request.prompt.text)) {
            return Some(hit.clone());
        }
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        for (i, rule) in self.rules.iter().enumerate() {
            if !rule.matches(request) {
                continue;
            }
            let pos = cursor.rule_pos[i];
            if let Some(entry) = rule.responses.get(pos) {
                cursor.rule_pos[i] += 1;
                return Some(entry.clone());
            }
            if rule.repeat_last {
                if let Some(last) = rule.responses.last() {
                    return Some(last.clone());
                }
            }
        }
        cursor.queue.pop_front()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn tag(&self) -> &str {
        "scripted"
    }

    fn model_tag(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        self.next_entry(request)
            .ok_or(BackendError::ScriptExhausted)?
            .into_reply()
    }
}
