//! OpenAI-compatible chat-completions backend.
//!
//! One wire format covers every provider the harness talks to; image content
//! travels as a base64 data URL. Provider-specific variants slot in as
//! additional [`ChatBackend`] implementations.

use super::{
    BackendReply, ChatBackend, EndpointConfig, FinishReason, GatewayError, PerplexityScorer,
    TargetRequest, TokenUsage,
};
use crate::text::TextPrompt;
use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;
use std::time::{Duration, Instant};

pub struct HttpChatBackend {
    client: reqwest::Client,
    base_url: String,
    model: String,
    auth_env_var: Option<String>,
    label: String,
}

impl HttpChatBackend {
    pub fn new(config: &EndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model_name.clone(),
            auth_env_var: config.auth_env_var.clone(),
            label: format!("http:{}", config.model_name),
        })
    }

    fn credential(&self) -> Result<Option<String>, GatewayError> {
        match &self.auth_env_var {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                GatewayError::Auth(format!("environment variable {var} is not set"))
            }),
        }
    }

    fn body_for(&self, request: &TargetRequest) -> serde_json::Value {
        let content = match &request.image {
            None => json!(request.text.as_str()),
            Some(attachment) => json!([
                {"type": "text", "text": request.text.as_str()},
                {"type": "image_url", "image_url": {"url": attachment.to_data_url()}},
            ]),
        };
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

#[derive(Debug, Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some("content_filter") => FinishReason::ContentFilter,
        Some(_) => FinishReason::Error,
    }
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn complete(&self, request: &TargetRequest) -> Result<BackendReply, GatewayError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut builder = self.client.post(&url).json(&self.body_for(request));
        if let Some(token) = self.credential()? {
            builder = builder.bearer_auth(token);
        }
        let started = Instant::now();
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(e.to_string())
            } else {
                GatewayError::Protocol(e.to_string())
            }
        })?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;

        if !status.is_success() {
            let detail = String::from_utf8_lossy(&bytes);
            let detail = detail.chars().take(512).collect::<String>();
            return Err(match status.as_u16() {
                401 | 403 => GatewayError::Auth(format!("{status}: {detail}")),
                429 => GatewayError::RateLimited(format!("{status}: {detail}")),
                408 | 500..=599 => GatewayError::Timeout(format!("{status}: {detail}")),
                _ => GatewayError::Protocol(format!("{status}: {detail}")),
            });
        }

        let parsed: ChatCompletionResponse = serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::Protocol(format!("malformed response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Protocol("response carried no choices".into()))?;
        let finish_reason = parse_finish_reason(choice.finish_reason.as_deref());
        let content = choice.message.content.unwrap_or_default();
        if content.is_empty() && finish_reason == FinishReason::Stop {
            return Err(GatewayError::Protocol(
                "empty content with finish_reason=stop".into(),
            ));
        }
        Ok(BackendReply {
            content,
            finish_reason,
            latency_ms,
            token_usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Perplexity over HTTP.
///
/// Expects a POST `/perplexity` endpoint taking `{"model", "text"}` and
/// returning either `{"perplexity": <f64>}` directly or
/// `{"logprobs": [<f64>, ...]}`, in which case the score is
/// exp(-mean(logprobs)).
pub struct HttpPerplexityScorer {
    client: reqwest::Client,
    base_url: String,
    model: String,
    auth_env_var: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PerplexityResponse {
    #[serde(default)]
    perplexity: Option<f64>,
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
}

impl HttpPerplexityScorer {
    pub fn new(config: &EndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model_name.clone(),
            auth_env_var: config.auth_env_var.clone(),
        })
    }
}

#[async_trait]
impl PerplexityScorer for HttpPerplexityScorer {
    async fn score(&self, text: &TextPrompt) -> Result<f64, GatewayError> {
        let url = format!("{}/perplexity", self.base_url);
        let mut builder = self
            .client
            .post(&url)
            .json(&json!({"model": self.model, "text": text.as_str()}));
        if let Some(var) = &self.auth_env_var {
            let token = std::env::var(var).map_err(|_| {
                GatewayError::Auth(format!("environment variable {var} is not set"))
            })?;
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(e.to_string())
            } else {
                GatewayError::Protocol(e.to_string())
            }
        })?;
        if !response.status().is_success() {
            return Err(GatewayError::Protocol(format!(
                "perplexity endpoint returned {}",
                response.status()
            )));
        }
        let parsed: PerplexityResponse = response
            .json()
            .await
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        if let Some(ppl) = parsed.perplexity {
            if ppl > 0.0 {
                return Ok(ppl);
            }
            return Err(GatewayError::Protocol("non-positive perplexity".into()));
        }
        match parsed.logprobs {
            Some(lp) if !lp.is_empty() => {
                let mean = lp.iter().sum::<f64>() / lp.len() as f64;
                Ok((-mean).exp())
            }
            _ => Err(GatewayError::Protocol(
                "scorer returned neither perplexity nor logprobs".into(),
            )),
        }
    }
}
