//! Deterministic scripted backend for tests and offline replay.
//!
//! Scripts are keyed by `(tag, ordinal)`: the nth call with a given stage
//! tag gets the nth scripted response, regardless of prompt wording. Tags
//! are stage-scoped, so the same script serves both a full `run` and
//! stage-by-stage invocations.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, ChatRequest, ChatResponse, LlmError};
use crate::corpus::{estimate_tokens, DEFAULT_CHARS_PER_TOKEN};

/// One scripted response. `response` may be a plain string or any JSON
/// value; values are serialized compactly, which keeps script fixtures
/// readable when the response itself is JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    pub ordinal: usize,
    pub response: Value,
}

impl ScriptEntry {
    pub fn text(tag: &str, ordinal: usize, response: &str) -> Self {
        ScriptEntry {
            tag: tag.to_string(),
            ordinal,
            response: Value::String(response.to_string()),
        }
    }

    pub fn json(tag: &str, ordinal: usize, response: Value) -> Self {
        ScriptEntry {
            tag: tag.to_string(),
            ordinal,
            response,
        }
    }

    fn response_text(&self) -> String {
        match &self.response {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

/// A captured call, for asserting prompt contents and call counts.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub tag: String,
    pub ordinal: usize,
    pub system_prompt: String,
    pub user_prompt: String,
}

pub struct MockBackend {
    responses: HashMap<(String, usize), String>,
    state: Mutex<MockState>,
}

#[derive(Default)]
struct MockState {
    cursors: HashMap<String, usize>,
    calls: Vec<CallRecord>,
}

impl MockBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let responses = entries
            .into_iter()
            .map(|e| ((e.tag.clone(), e.ordinal), e.response_text()))
            .collect();
        MockBackend {
            responses,
            state: Mutex::new(MockState::default()),
        }
    }

    pub fn from_script_file(path: &Path) -> Result<Self, LlmError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&raw)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Ok(MockBackend::from_entries(entries))
    }

    /// Every call made so far, in order.
    pub fn call_log(&self) -> Vec<CallRecord> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn total_calls(&self) -> usize {
        self.state.lock().unwrap().calls.len()
    }

    pub fn calls_for_tag(&self, tag: &str) -> usize {
        self.state
            .lock()
            .unwrap()
            .calls
            .iter()
            .filter(|c| c.tag == tag)
            .count()
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let ordinal = {
            let mut state = self.state.lock().unwrap();
            let cursor = state.cursors.entry(req.tag.clone()).or_insert(0);
            let ordinal = *cursor;
            *cursor += 1;
            state.calls.push(CallRecord {
                tag: req.tag.clone(),
                ordinal,
                system_prompt: req.system_prompt.clone(),
                user_prompt: req.user_prompt.clone(),
            });
            ordinal
        };
        let text = self
            .responses
            .get(&(req.tag.clone(), ordinal))
            .ok_or_else(|| LlmError::ScriptExhausted {
                tag: req.tag.clone(),
                ordinal,
            })?
            .clone();
        let prompt = format!("{}\n{}", req.system_prompt, req.user_prompt);
        Ok(ChatResponse {
            prompt_tokens: estimate_tokens(&prompt, DEFAULT_CHARS_PER_TOKEN),
            completion_tokens: estimate_tokens(&text, DEFAULT_CHARS_PER_TOKEN),
            text,
            backend: "mock".to_string(),
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}
