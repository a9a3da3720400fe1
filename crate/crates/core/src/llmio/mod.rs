//! Chat-completion backends and structured-output handling.
//!
//! Every LLM-facing stage goes through the [`Backend`] trait: a live
//! OpenAI-compatible HTTP client for real runs, and a deterministic scripted
//! mock for tests and offline replay. Stage code never inspects raw
//! completions directly — responses flow through [`parse::parse_structured`]
//! or, for scene text, a verbatim passthrough.

pub mod live;
pub mod mock;
pub mod parse;
pub mod template;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::LiveBackend;
pub use mock::{CallRecord, MockBackend, ScriptEntry};
pub use parse::{parse_structured, Parsed};
pub use template::TemplateSet;

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    /// Sampling temperature; 0 for reproducible generations.
    pub temperature: f64,
    pub max_tokens: u32,
    /// Stage label; keys mock scripts and shows up in error context.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(
        tag: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            max_tokens: 4096,
            tag: tag.into(),
        }
    }
}

/// A completed chat response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub backend: String,
}

/// Which backend implementation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    Openai,
    /// Scripted replay from a JSON file.
    Mock,
}

/// Backend settings; which fields matter depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Script file; required for the mock backend.
    pub script_path: Option<PathBuf>,
    pub timeout_s: u64,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o-mini".to_string(),
            api_key_env: "PLOTLOOM_API_KEY".to_string(),
            script_path: None,
            timeout_s: 60,
            max_retries: 3,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            BackendKind::Openai => {
                if self.base_url.is_empty() {
                    return Err("backend.base_url is required for the openai backend".into());
                }
                if self.model.is_empty() {
                    return Err("backend.model is required for the openai backend".into());
                }
            }
            BackendKind::Mock => {
                if self.script_path.is_none() {
                    return Err("backend.script is required for the mock backend".into());
                }
            }
        }
        Ok(())
    }
}

/// Errors from backends and structured parsing.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempts: {detail}")]
    BackendUnavailable { attempts: u32, detail: String },
    #[error("mock script has no response for tag `{tag}` ordinal {ordinal}")]
    ScriptExhausted { tag: String, ordinal: usize },
    #[error("API key environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("schema violation at `{field}`: {detail}")]
    SchemaViolation { field: String, detail: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("script file error: {0}")]
    Script(String),
}

/// A chat-completion backend. Implementations are safe for concurrent use.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    fn name(&self) -> &str;
}

/// Construct the backend described by `cfg`.
pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>, LlmError> {
    match cfg.kind {
        BackendKind::Mock => {
            let path = cfg.script_path.as_ref().ok_or_else(|| {
                LlmError::Script("mock backend requires a script path".to_string())
            })?;
            Ok(Box::new(MockBackend::from_script_file(path)?))
        }
        BackendKind::Openai => Ok(Box::new(LiveBackend::from_config(cfg)?)),
    }
}

/// Complete one stage call and parse the response into `T`, with the
/// standard single repair round (same tag, repair template quoting the
/// parse error).
pub fn complete_structured<T: serde::de::DeserializeOwned>(
    backend: &dyn Backend,
    templates: &TemplateSet,
    tag: &str,
    user_prompt: &str,
) -> Result<Parsed<T>, LlmError> {
    let system = templates.get("system")?;
    let response = backend.complete(&ChatRequest::new(tag, system, user_prompt))?;
    let mut repair = |failure: &parse::ParseFailure| -> Result<String, LlmError> {
        let prompt = templates.render(
            "repair",
            &[("error", failure.message.as_str()), ("raw", response.text.as_str())],
        )?;
        Ok(backend.complete(&ChatRequest::new(tag, system, &prompt))?.text)
    };
    parse_structured(&response.text, Some(&mut repair))
}
