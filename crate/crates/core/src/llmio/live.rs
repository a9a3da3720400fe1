//! OpenAI-compatible chat-completions client with exponential backoff.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendConfig, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: String,
    max_retries: u32,
    backoff_base: Duration,
}

impl LiveBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::AuthMissing(cfg.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_s))
            .build()
            .map_err(|e| LlmError::BackendUnavailable {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(LiveBackend {
            client,
            base_url: cfg.base_url.trim_end_matches('/').to_string(),
            model: cfg.model.clone(),
            api_key,
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_millis(250),
        })
    }

    /// Shrink the retry backoff; test-only knob for the stub-server tests.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, String> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| format!("transport: {e}"))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(format!("status {status}"));
        }
        if !status.is_success() {
            // Client errors are not retryable; report them verbatim.
            let text = response.text().unwrap_or_default();
            return Err(format!("fatal status {status}: {text}"));
        }
        let parsed: CompletionBody = response
            .json()
            .map_err(|e| format!("bad response body: {e}"))?;
        let usage = parsed.usage.unwrap_or_default();
        let text = parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .unwrap_or_default();
        Ok(ChatResponse {
            text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            backend: "openai".to_string(),
        })
    }
}

impl Backend for LiveBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            match self.attempt(req) {
                Ok(response) => return Ok(response),
                Err(detail) => {
                    if detail.starts_with("fatal") {
                        return Err(LlmError::BackendUnavailable {
                            attempts: attempt + 1,
                            detail,
                        });
                    }
                    last_error = detail;
                    if attempt < self.max_retries {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    }
                }
            }
        }
        Err(LlmError::BackendUnavailable {
            attempts: self.max_retries + 1,
            detail: last_error,
        })
    }

    fn name(&self) -> &str {
        "openai"
    }
}
