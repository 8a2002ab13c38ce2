//! One completion interface over interchangeable model backends.
//!
//! A [`Gateway`] wraps a [`CompletionBackend`] with retries on transport
//! failures, an optional request-rate limit, and usage recording into a
//! shared [`CostLedger`].

mod http;
mod ledger;
mod scripted;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::prompt::PromptText;

pub use http::{HttpBackend, HttpConfig, ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
pub use ledger::{
    report_costs, CostLedger, CostReport, LedgerEntry, LedgerError, PriceTable, StageCost,
    TokenPrice,
};
pub use scripted::{
    prompt_hash, ScriptEntry, ScriptFile, ScriptRule, ScriptedBackend, ScriptedFailure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    /// Character-based estimate used when a backend reports no usage.
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        Self {
            prompt_tokens: estimate_tokens(prompt),
            completion_tokens: estimate_tokens(completion),
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// ceil(chars / 4)
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: PromptText,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub attempts: u32,
    pub backend_tag: String,
}

/// What a backend hands back for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network-level or overload failure; worth retrying.
    #[error("transport failure: {0}")]
    Transient(String),
    #[error("backend refused the request: {0}")]
    Refusal(String),
    #[error("token limit exceeded: {0}")]
    TokenLimit(String),
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("{backend}: giving up after {attempts} attempts: {last}")]
    RetriesExhausted {
        backend: String,
        attempts: u32,
        last: String,
    },
    #[error("{backend}: {source}")]
    Backend {
        backend: String,
        #[source]
        source: BackendError,
    },
}

pub trait CompletionBackend: Send + Sync {
    /// Short identifier, e.g. `scripted` or `http`.
    fn tag(&self) -> &str;

    /// Model name used for pricing.
    fn model_tag(&self) -> &str;

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub base_delay: Duration,
    #[serde(with = "secs")]
    pub max_delay: Duration,
    pub jitter: bool,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests and scripted runs.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            jitter: false,
        }
    }

    /// Delay before retry number `retry` (1-based): base · 2^(retry-1),
    /// capped, with up to 50% random jitter added.
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << (retry.saturating_sub(1)).min(16));
        let capped = exp.min(self.max_delay);
        if self.jitter && !capped.is_zero() {
            let extra = rand::rng().random_range(0.0..0.5);
            capped.mul_f64(1.0 + extra)
        } else {
            capped
        }
    }
}

/// Spaces requests evenly at a fixed requests-per-minute budget.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        Self {
            interval: Duration::from_secs(60) / requests.max(1),
            next: Mutex::new(Instant::now()),
        }
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Backend plus retry, rate-limit and accounting policy.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    ledger: Arc<CostLedger>,
    temperature: f64,
    max_output_tokens: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.tag())
            .field("model", &self.backend.model_tag())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, ledger: Arc<CostLedger>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            limiter: None,
            ledger,
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(Arc::new(RateLimiter::per_minute(requests_per_minute)));
        self
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n.max(1);
        self
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    pub fn backend_tag(&self) -> &str {
        self.backend.tag()
    }

    pub fn model_tag(&self) -> &str {
        self.backend.model_tag()
    }

    pub fn request(&self, prompt: &PromptText) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            model_tag: self.backend.model_tag().to_string(),
        }
    }

    pub fn complete(&self, prompt: &PromptText) -> Result<Completion, GatewayError> {
        self.complete_request(&self.request(prompt))
    }

    /// Sends `request`, retrying transient failures with backoff. Usage is
    /// recorded under the prompt kind once a reply arrives.
    pub fn complete_request(
        &self,
        request: &CompletionRequest,
    ) -> Result<Completion, GatewayError> {
        if request.prompt.text.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let max_attempts = self.retry.max_retries + 1;
        let mut attempts = 0;
        loop {
            attempts += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.send(request) {
                Ok(reply) => {
                    let usage = reply
                        .usage
                        .unwrap_or_else(|| Usage::estimate(&request.prompt.text, &reply.text));
                    self.ledger
                        .record(request.prompt.kind, &request.model_tag, usage);
                    return Ok(Completion {
                        text: reply.text,
                        usage,
                        attempts,
                        backend_tag: self.backend.tag().to_string(),
                    });
                }
                Err(BackendError::Transient(msg)) => {
                    if attempts >= max_attempts {
                        return Err(GatewayError::RetriesExhausted {
                            backend: self.backend.tag().to_string(),
                            attempts,
                            last: msg,
                        });
                    }
                    let delay = self.retry.delay(attempts);
                    log::warn!(
                        "{}: transient failure on attempt {attempts} ({msg}); retrying in {delay:?}",
                        self.backend.tag()
                    );
                    std::thread::sleep(delay);
                }
                Err(source) => {
                    return Err(GatewayError::Backend {
                        backend: self.backend.tag().to_string(),
                        source,
                    })
                }
            }
        }
    }
}
