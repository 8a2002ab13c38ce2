//! Chat-completions over HTTP (`POST {base}/chat/completions`).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, Usage};

pub const ENV_API_BASE: &str = "SEASQL_API_BASE";
pub const ENV_MODEL: &str = "SEASQL_MODEL";
pub const ENV_API_KEY: &str = "SEASQL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub api_base: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let api_base = var(ENV_API_BASE)
            .ok_or_else(|| BackendError::Config(format!("{ENV_API_BASE} is not set")))?;
        let model = var(ENV_MODEL)
            .ok_or_else(|| BackendError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(Self {
            api_base,
            model,
            api_key: var(ENV_API_KEY),
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("api_base", &self.config.api_base)
            .field("model", &self.config.model)
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ApiUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Ok(Self::new(HttpConfig::from_env()?))
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.api_base.trim_end_matches('/')
        )
    }
}

impl CompletionBackend for HttpBackend {
    fn tag(&self) -> &str {
        "http"
    }

    fn model_tag(&self) -> &str {
        &self.config.model
    }

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": request.prompt.text }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        classify_status(status, &text)?;

        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Refusal(format!("malformed response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Refusal("response has no choices".into()))?;
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(BackendError::Refusal("content filtered".into()));
        }
        let content = choice
            .message
            .content
            .ok_or_else(|| BackendError::Refusal("response has no content".into()))?;
        Ok(BackendReply {
            text: content,
            usage: parsed.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

fn classify_status(status: u16, body: &str) -> Result<(), BackendError> {
    match status {
        200..=299 => Ok(()),
        408 | 409 | 429 | 500..=599 => {
            Err(BackendError::Transient(format!("HTTP {status}: {body}")))
        }
        _ if body.contains("context_length_exceeded")
            || body.contains("maximum context length") =>
        {
            Err(BackendError::TokenLimit(format!("HTTP {status}: {body}")))
        }
        _ => Err(BackendError::Refusal(format!("HTTP {status}: {body}"))),
    }
}
