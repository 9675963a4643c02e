//! Backend-neutral completion contract.
//!
//! A [`CompletionRequest`] carries the full set of per-move knobs (leading
//! system message, few-shot examples, stop string, model) plus the sampling
//! temperature. Backends turn it into candidates: [`MockBackend`] is pure and
//! deterministic and backs every automated test, [`RemoteBackend`] speaks the
//! chat and legacy-completion HTTP dialects.

mod mock;
mod remote;
mod retry;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moves::{CreativityLevel, Move, ProblemError, PromptingMode};

pub use mock::{fnv1a64, mock_candidate, MockBackend};
pub use remote::{ApiStyle, RemoteBackend};
pub use retry::{retry_with_policy, RetryPolicy};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

pub const ENV_BACKEND: &str = "IDEATOR_BACKEND";
pub const ENV_ENDPOINT: &str = "IDEATOR_ENDPOINT";
pub const ENV_CREDENTIAL_ENV: &str = "IDEATOR_CREDENTIAL_ENV";
pub const ENV_MOCK_SEED: &str = "IDEATOR_MOCK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_ref: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot_preamble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_sequence: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub candidate_count: u32,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.candidate_count == 0 {
            return Err(LlmError::InvalidRequest(
                "candidate_count must be at least 1".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub candidates: Vec<String>,
    pub backend_id: String,
    pub model_ref: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    /// Set when the provider returned fewer or cut-off candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out after {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("provider rejected the request ({status}): {message}")]
    ProviderRejected { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Whether another attempt could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Timeout { .. } | Self::Transport(_) => true,
            Self::ProviderRejected { status, .. } => {
                matches!(status, 408 | 409 | 429) || *status >= 500
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteChat,
    RemoteCompletion,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RemoteChat => "remote-chat",
            Self::RemoteCompletion => "remote-completion",
            Self::Mock => "mock",
        }
    }

    pub fn is_remote(self) -> bool {
        !matches!(self, Self::Mock)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::RemoteChat, Self::RemoteCompletion, Self::Mock]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown backend kind {s:?} (expected remote-chat, remote-completion or mock)"
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    /// Name of the environment variable that holds the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::mock(0)
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: None,
            credential_env: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            retry: RetryPolicy::default(),
            seed: Some(seed),
        }
    }

    pub fn remote(kind: BackendKind, endpoint_url: &str, credential_env: &str) -> Self {
        Self {
            kind,
            endpoint_url: Some(endpoint_url.to_owned()),
            credential_env: Some(credential_env.to_owned()),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            retry: RetryPolicy::default(),
            seed: None,
        }
    }

    /// Builds a config from `IDEATOR_*` variables; unset means the mock backend.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let kind = match lookup(ENV_BACKEND) {
            Some(raw) => raw.parse::<BackendKind>().map_err(LlmError::Config)?,
            None => BackendKind::Mock,
        };
        let config = if kind.is_remote() {
            Self {
                kind,
                endpoint_url: lookup(ENV_ENDPOINT),
                credential_env: lookup(ENV_CREDENTIAL_ENV),
                seed: None,
                ..Self::default()
            }
        } else {
            let seed = match lookup(ENV_MOCK_SEED) {
                Some(raw) => raw.parse::<u64>().map_err(|_| {
                    LlmError::Config(format!("{ENV_MOCK_SEED}={raw:?} is not an integer"))
                })?,
                None => 0,
            };
            Self::mock(seed)
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind.is_remote() {
            let url = self
                .endpoint_url
                .as_deref()
                .ok_or_else(|| LlmError::Config(format!("{} requires endpoint_url", self.kind)))?;
            reqwest::Url::parse(url)
                .map_err(|e| LlmError::Config(format!("endpoint_url {url:?}: {e}")))?;
            if self.credential_env.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config(format!(
                    "{} requires credential_env",
                    self.kind
                )));
            }
            if self.seed.is_some() {
                return Err(LlmError::Config(
                    "seed is only valid for the mock backend".into(),
                ));
            }
        } else if self.endpoint_url.is_some() || self.credential_env.is_some() {
            return Err(LlmError::Config(
                "the mock backend takes no endpoint_url or credential_env".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(LlmError::Config("timeout_ms must be positive".into()));
        }
        self.retry.validate().map_err(LlmError::Config)
    }
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

/// Instantiates the backend described by `config`.
pub fn connect(config: &BackendConfig) -> Result<Arc<dyn CompletionBackend>, LlmError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(config.seed.unwrap_or(0))),
        BackendKind::RemoteChat | BackendKind::RemoteCompletion => {
            Arc::new(RemoteBackend::from_config(config)?)
        }
    })
}

pub async fn complete(
    config: &BackendConfig,
    request: &CompletionRequest,
) -> Result<CompletionResponse, LlmError> {
    connect(config)?.complete(request).await
}

/// Model selection and output budget applied when building requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSettings {
    #[serde(default = "default_model")]
    pub default_model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Maps a move's `finetune_model_ref` to the provider's model id. Fine-tune
    /// moves whose reference is missing here run on the default model with
    /// their bundled few-shot examples instead.
    #[serde(default)]
    pub finetuned_models: BTreeMap<String, String>,
}

fn default_model() -> String {
    DEFAULT_MODEL.to_owned()
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            default_model: default_model(),
            max_tokens: DEFAULT_MAX_TOKENS,
            finetuned_models: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("idea count must be at least 1")]
    ZeroCount,
}

/// Assembles the completion request for one move invocation.
pub fn build_request(
    mv: &Move,
    problem: &str,
    creativity: CreativityLevel,
    count: u32,
    settings: &GenerationSettings,
) -> Result<CompletionRequest, RequestError> {
    if count == 0 {
        return Err(RequestError::ZeroCount);
    }
    let prompt = mv.render(problem)?;

    let finetuned = match (mv.prompting_mode, &mv.finetune_model_ref) {
        (PromptingMode::FineTune, Some(name)) => settings.finetuned_models.get(name),
        _ => None,
    };
    let (model_ref, few_shot_preamble) = match finetuned {
        Some(model) => (model.clone(), None),
        None => (settings.default_model.clone(), mv.few_shot_preamble.clone()),
    };

    Ok(CompletionRequest {
        model_ref,
        prompt,
        system_message: mv.system_message.clone(),
        few_shot_preamble,
        stop_sequence: mv.stop_sequence.clone(),
        temperature: creativity.temperature(),
        max_tokens: settings.max_tokens,
        candidate_count: count,
    })
}
