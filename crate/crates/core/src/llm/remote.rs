//! HTTP client for OpenAI-style providers.
//!
//! Chat style sends the system message as its own turn and the few-shot
//! preamble glued to the prompt as the user turn. Completion style flattens
//! everything into one prompt string.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    retry_with_policy, BackendConfig, BackendKind, CompletionBackend, CompletionRequest,
    CompletionResponse, LlmError, RetryPolicy, TokenUsage,
};

const ERROR_SNIPPET_CHARS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiStyle {
    Chat,
    Completion,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    style: ApiStyle,
    endpoint: reqwest::Url,
    credential_env: String,
    timeout: Duration,
    retry: RetryPolicy,
    client: reqwest::Client,
}

/// Candidates, usage and an optional truncation warning.
type ParsedReply = (Vec<String>, Option<TokenUsage>, Option<String>);

#[derive(Deserialize)]
struct ProviderResponse {
    choices: Vec<ProviderChoice>,
    #[serde(default)]
    usage: Option<ProviderUsage>,
}

#[derive(Deserialize)]
struct ProviderChoice {
    #[serde(default)]
    message: Option<ProviderMessage>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ProviderMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ProviderUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let style = match config.kind {
            BackendKind::RemoteChat => ApiStyle::Chat,
            BackendKind::RemoteCompletion => ApiStyle::Completion,
            BackendKind::Mock => {
                return Err(LlmError::Config(
                    "mock config passed to the remote backend".into(),
                ))
            }
        };
        // validate() guarantees both are present and the URL parses.
        let endpoint = reqwest::Url::parse(config.endpoint_url.as_deref().unwrap_or_default())
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(Self {
            style,
            endpoint,
            credential_env: config.credential_env.clone().unwrap_or_default(),
            timeout: Duration::from_millis(config.timeout_ms),
            retry: config.retry,
            client,
        })
    }

    pub fn style(&self) -> ApiStyle {
        self.style
    }

    /// JSON body sent to the provider for `request`.
    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let preamble = request.few_shot_preamble.as_deref().unwrap_or_default();
        let mut body = match self.style {
            ApiStyle::Chat => {
                let mut messages = Vec::new();
                if let Some(system) = &request.system_message {
                    messages.push(json!({"role": "system", "content": system}));
                }
                messages.push(
                    json!({"role": "user", "content": format!("{preamble}{}", request.prompt)}),
                );
                json!({"model": request.model_ref, "messages": messages})
            }
            ApiStyle::Completion => {
                let system = request
                    .system_message
                    .as_deref()
                    .map(|s| format!("{s}\n\n"))
                    .unwrap_or_default();
                json!({"model": request.model_ref, "prompt": format!("{system}{preamble}{}", request.prompt)})
            }
        };
        body["temperature"] = json!(request.temperature);
        body["n"] = json!(request.candidate_count);
        body["max_tokens"] = json!(request.max_tokens);
        if let Some(stop) = &request.stop_sequence {
            body["stop"] = json!(stop);
        }
        body
    }

    fn credential(&self) -> Result<String, LlmError> {
        match std::env::var(&self.credential_env) {
            Ok(token) if !token.trim().is_empty() => Ok(token),
            _ => Err(LlmError::Auth(format!(
                "credential environment variable {} is not set",
                self.credential_env
            ))),
        }
    }

    async fn attempt(
        &self,
        token: &str,
        body: &Value,
        requested: u32,
    ) -> Result<ParsedReply, LlmError> {
        let call = async {
            let response = self
                .client
                .post(self.endpoint.clone())
                .bearer_auth(token)
                .json(body)
                .send()
                .await
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            let status = response.status();
            let text = response
                .text()
                .await
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            Ok::<_, LlmError>((status, text))
        };
        let (status, text) = tokio::time::timeout(self.timeout, call)
            .await
            .map_err(|_| LlmError::Timeout {
                after_ms: self.timeout.as_millis() as u64,
            })??;

        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth(provider_message(&text)));
        }
        if !status.is_success() {
            return Err(LlmError::ProviderRejected {
                status: status.as_u16(),
                message: provider_message(&text),
            });
        }
        self.parse(&text, requested)
    }

    fn parse(&self, text: &str, requested: u32) -> Result<ParsedReply, LlmError> {
        let parsed: ProviderResponse =
            serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let mut truncated = 0;
        let mut candidates = Vec::with_capacity(parsed.choices.len());
        for choice in parsed.choices {
            let content = match self.style {
                ApiStyle::Chat => choice.message.and_then(|m| m.content),
                ApiStyle::Completion => choice.text,
            };
            let content = content
                .ok_or_else(|| LlmError::MalformedResponse("choice without content".into()))?;
            if choice.finish_reason.as_deref() == Some("length") {
                truncated += 1;
            }
            candidates.push(content);
        }
        if candidates.is_empty() {
            return Err(LlmError::MalformedResponse("no choices returned".into()));
        }
        let mut warnings = Vec::new();
        if candidates.len() < requested as usize {
            warnings.push(format!(
                "provider returned {} of {requested} requested candidates",
                candidates.len()
            ));
        }
        if truncated > 0 {
            warnings.push(format!("{truncated} candidate(s) hit the max_tokens limit"));
        }
        let usage = parsed.usage.map(|u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        let warning = (!warnings.is_empty()).then(|| warnings.join("; "));
        Ok((candidates, usage, warning))
    }
}

fn provider_message(body: &str) -> String {
    let from_json = serde_json::from_str::<Value>(body).ok().and_then(|v| {
        let err = v.get("error")?;
        err.get("message")
            .and_then(Value::as_str)
            .or_else(|| err.as_str())
            .map(str::to_owned)
    });
    from_json.unwrap_or_else(|| body.chars().take(ERROR_SNIPPET_CHARS).collect())
}

#[async_trait]
impl CompletionBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        match self.style {
            ApiStyle::Chat => "remote-chat",
            ApiStyle::Completion => "remote-completion",
        }
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.validate()?;
        let token = self.credential()?;
        let body = self.request_body(request);
        let started = Instant::now();
        let (candidates, token_usage, warning) =
            retry_with_policy(&self.retry, tokio::time::sleep, |_| {
                self.attempt(&token, &body, request.candidate_count)
            })
            .await?;
        Ok(CompletionResponse {
            candidates,
            backend_id: self.backend_id().to_owned(),
            model_ref: request.model_ref.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            token_usage,
            warning,
        })
    }
}
