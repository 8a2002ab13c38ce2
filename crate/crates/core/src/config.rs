//! Run configuration, loadable from a single JSON file:
//!
//! ```json
//! {
//!   "enhancement": { "k": 200, "m": 2 },
//!   "executor":    { "timeout_s": 30, "max_rows": 10000 },
//!   "pipeline":    { "max_iters": 5, "parallelism": 4 },
//!   "gateway":     { "backend": "http", "prices": { "gpt-3.5-turbo-16k-0613": { "input": 3e-6, "output": 4e-6 } } }
//! }
//! ```
//!
//! Every section and field is optional.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exec::{ExecLimits, DEFAULT_SUMMARY_CHARS, DEFAULT_SUMMARY_ROWS};
use crate::llm::{
    BackendError, CompletionBackend, CostLedger, Gateway, HttpBackend, PriceTable, RetryPolicy,
    ScriptedBackend,
};
use crate::schema::EnhancementConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub enhancement: EnhancementConfig,
    pub executor: ExecutorConfig,
    pub pipeline: PipelineConfig,
    pub gateway: GatewayConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Config = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.enhancement.validate().map_err(ConfigError::Invalid)?;
        if !(self.executor.timeout_s.is_finite() && self.executor.timeout_s > 0.0) {
            return Err(ConfigError::Invalid(
                "executor.timeout_s must be positive".into(),
            ));
        }
        if self.executor.max_rows == 0 {
            return Err(ConfigError::Invalid(
                "executor.max_rows must be positive".into(),
            ));
        }
        if self.pipeline.parallelism == 0 {
            return Err(ConfigError::Invalid(
                "pipeline.parallelism must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub timeout_s: f64,
    pub max_rows: usize,
    /// Rows shown in result summaries fed to prompts.
    pub summary_rows: usize,
    /// Character cap of result summaries.
    pub summary_chars: usize,
    /// Timed repetitions per query for efficiency scoring.
    pub timing_repetitions: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            timeout_s: 30.0,
            max_rows: 10_000,
            summary_rows: DEFAULT_SUMMARY_ROWS,
            summary_chars: DEFAULT_SUMMARY_CHARS,
            timing_repetitions: 5,
        }
    }
}

impl ExecutorConfig {
    pub fn limits(&self) -> ExecLimits {
        ExecLimits {
            timeout: Duration::from_secs_f64(self.timeout_s),
            max_rows_fetched: self.max_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_iters: usize,
    pub parallelism: usize,
    /// Semantic-enhanced schema (sampled values in the schema text).
    pub ses: bool,
    /// Bias elimination pass.
    pub abe: bool,
    /// Execute / reflect / correct loop.
    pub dea: bool,
    /// Fail the question instead of falling back to the pre-SQL when the
    /// eliminator backend errors.
    pub elim_hard_fail: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iters: 5,
            parallelism: 4,
            ses: true,
            abe: true,
            dea: true,
            elim_hard_fail: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    Ses,
    Abe,
    Dea,
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ses" => Ok(Ablation::Ses),
            "abe" => Ok(Ablation::Abe),
            "dea" => Ok(Ablation::Dea),
            other => Err(format!(
                "unknown ablation `{other}` (expected ses, abe or dea)"
            )),
        }
    }
}

impl PipelineConfig {
    pub fn ablate(&mut self, a: Ablation) {
        match a {
            Ablation::Ses => self.ses = false,
            Ablation::Abe => self.abe = false,
            Ablation::Dea => self.dea = false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// `http` or `scripted:<file>`.
    pub backend: String,
    /// Backend for the eliminator; defaults to `backend`.
    pub elim_backend: Option<String>,
    pub prices: PriceTable,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
    pub max_output_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: "http".into(),
            elim_backend: None,
            prices: PriceTable::new(),
            retry: RetryPolicy::default(),
            requests_per_minute: None,
            max_output_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Http,
    Scripted(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "http" {
            Ok(BackendSpec::Http)
        } else if let Some(path) = s.strip_prefix("scripted:") {
            if path.is_empty() {
                Err("scripted backend needs a file: scripted:<file>".into())
            } else {
                Ok(BackendSpec::Scripted(PathBuf::from(path)))
            }
        } else {
            Err(format!(
                "unknown backend `{s}` (expected http or scripted:<file>)"
            ))
        }
    }
}

impl BackendSpec {
    pub fn instantiate(&self) -> Result<Arc<dyn CompletionBackend>, BackendError> {
        Ok(match self {
            BackendSpec::Http => Arc::new(HttpBackend::from_env()?),
            BackendSpec::Scripted(path) => Arc::new(ScriptedBackend::load(path)?),
        })
    }
}

impl GatewayConfig {
    /// Wraps `backend` in a gateway with this config's retry and rate
    /// settings. Scripted backends never wait between retries.
    pub fn gateway(&self, backend: Arc<dyn CompletionBackend>, ledger: Arc<CostLedger>) -> Gateway {
        let retry = if backend.tag() == "scripted" {
            RetryPolicy::immediate(self.retry.max_retries)
        } else {
            self.retry
        };
        let mut gw = Gateway::new(backend, ledger)
            .with_retry(retry)
            .with_max_output_tokens(self.max_output_tokens);
        if let Some(rpm) = self.requests_per_minute {
            gw = gw.with_rate_limit(rpm);
        }
        gw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: Config =
            serde_json::from_str(r#"{"enhancement": {"m": 3}, "pipeline": {"max_iters": 2}}"#)
                .unwrap();
        assert_eq!(cfg.enhancement.m, 3);
        assert_eq!(cfg.enhancement.k, 200);
        assert_eq!(cfg.pipeline.max_iters, 2);
        assert_eq!(cfg.executor.timeout_s, 30.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = Config::default();
        cfg.enhancement.m = 500;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.executor.timeout_s = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn backend_specs() {
        assert_eq!("http".parse::<BackendSpec>(), Ok(BackendSpec::Http));
        assert_eq!(
            "scripted:a/b.json".parse::<BackendSpec>(),
            Ok(BackendSpec::Scripted("a/b.json".into()))
        );
        assert!("scripted:".parse::<BackendSpec>().is_err());
        assert!("grpc".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn ablations_toggle_flags() {
        let mut p = PipelineConfig::default();
        for a in ["ses", "ABE"] {
            p.ablate(a.parse().unwrap());
        }
        assert!(!p.ses && !p.abe && p.dea);
        assert!("xyz".parse::<Ablation>().is_err());
    }
}
