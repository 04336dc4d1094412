//! Network clients for target multimodal models, text-only judge and
//! perplexity backends, and fully scripted in-process mocks.
//!
//! Every backend sits behind [`ChatBackend`]; [`ModelClient`] layers the
//! per-endpoint concurrency cap, rate pacing, retry policy and optional
//! transcript logging on top, identically for HTTP and mock backends.

mod client;
mod http;
mod mock;

pub use client::{ModelClient, TranscriptWriter};
pub use http::{HttpChatBackend, HttpPerplexityScorer};
pub use mock::{
    MockInstrumentation, MockModelScript, RuleMatch, ScriptAction, ScriptRule,
    ScriptedBackend, ScriptedScorer,
};

use crate::text::TextPrompt;
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    /// Whether the retry policy may re-attempt the request.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::RateLimited(_) | GatewayError::Timeout(_))
    }
}

/// Connection settings for one model endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the credential; the value
    /// itself never appears in configs, traces or transcripts.
    pub auth_env_var: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    pub requests_per_minute: Option<u32>,
    /// First retry delay; doubles per attempt. Milliseconds.
    pub backoff_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            auth_env_var: None,
            timeout_secs: 120,
            max_retries: 3,
            max_concurrency: 4,
            requests_per_minute: None,
            backoff_base_ms: 500,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_secs == 0 {
            return Err(GatewayError::InvalidRequest("timeout must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_concurrency must be at least 1".into(),
            ));
        }
        if self.requests_per_minute == Some(0) {
            return Err(GatewayError::InvalidRequest(
                "requests_per_minute must be positive when set".into(),
            ));
        }
        Ok(())
    }
}

/// An encoded image attachment traveling with a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAttachment {
    /// MIME type, e.g. `image/png`.
    pub media_type: String,
    /// Raw encoded file bytes (not base64).
    #[serde(with = "serde_bytes_base64")]
    pub data: Vec<u8>,
}

impl ImageAttachment {
    pub fn png(data: Vec<u8>) -> Self {
        Self {
            media_type: "image/png".to_string(),
            data,
        }
    }

    pub fn to_data_url(&self) -> String {
        use base64::Engine;
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.data)
        )
    }
}

/// Base64 (de)serialization so attachments embed cleanly in JSON traces.
mod serde_bytes_base64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&base64::engine::general_purpose::STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let encoded = String::deserialize(de)?;
        base64::engine::general_purpose::STANDARD
            .decode(encoded)
            .map_err(serde::de::Error::custom)
    }
}

/// One request to a target model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRequest {
    pub text: TextPrompt,
    pub image: Option<ImageAttachment>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl TargetRequest {
    pub fn text_only(text: TextPrompt) -> Self {
        Self {
            text,
            image: None,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    /// A provider-side safety block. This is a normal response, not an
    /// error: outer guardrails are part of the system under test.
    ContentFilter,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A target model's reply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    pub token_usage: Option<TokenUsage>,
}

/// What a backend reports for one attempt; the client turns it into a
/// [`TargetResponse`].
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub content: String,
    pub finish_reason: FinishReason,
    /// Backends report their own latency so mock-backed runs stay
    /// bit-reproducible; the HTTP backend measures wall time.
    pub latency_ms: u64,
    pub token_usage: Option<TokenUsage>,
}

/// A chat-completion backend: live HTTP or in-process mock.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &TargetRequest) -> Result<BackendReply, GatewayError>;
    /// Short label used in transcripts and error messages.
    fn label(&self) -> &str;
}

/// A perplexity backend: returns exp(mean negative log-likelihood per token)
/// as reported by the scorer.
#[async_trait]
pub trait PerplexityScorer: Send + Sync {
    async fn score(&self, text: &TextPrompt) -> Result<f64, GatewayError>;
}
