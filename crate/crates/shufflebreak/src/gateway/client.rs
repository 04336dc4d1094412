//! The per-endpoint client: concurrency cap, request pacing, bounded
//! retries with exponential backoff, and optional transcript logging.

use super::{
    BackendReply, ChatBackend, EndpointConfig, GatewayError, TargetRequest, TargetResponse,
};
use crate::text::TextPrompt;
use serde_json::json;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::sync::Semaphore;
use tokio::time::Instant;

/// Shared concurrency/pacing limits for one endpoint.
pub(crate) struct Limits {
    semaphore: Semaphore,
    pacing: Option<Pacer>,
}

impl Limits {
    pub(crate) fn new(max_concurrency: usize, requests_per_minute: Option<u32>) -> Self {
        Self {
            semaphore: Semaphore::new(max_concurrency.max(1)),
            pacing: requests_per_minute.map(Pacer::per_minute),
        }
    }

    pub(crate) async fn acquire(&self) -> tokio::sync::SemaphorePermit<'_> {
        let permit = self.semaphore.acquire().await.expect("semaphore never closes");
        if let Some(pacer) = &self.pacing {
            pacer.wait_for_slot().await;
        }
        permit
    }
}

/// Serializes request starts to at most one per interval.
struct Pacer {
    interval: Duration,
    next_slot: tokio::sync::Mutex<Option<Instant>>,
}

impl Pacer {
    fn per_minute(requests: u32) -> Self {
        Self {
            interval: Duration::from_secs_f64(60.0 / requests.max(1) as f64),
            next_slot: tokio::sync::Mutex::new(None),
        }
    }

    async fn wait_for_slot(&self) {
        let slot = {
            let mut next = self.next_slot.lock().await;
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

/// Retry schedule: delay doubles per attempt starting from `base`, so the
/// sequence is non-decreasing by construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
}

impl RetryPolicy {
    pub(crate) fn delay_for(&self, retry_index: u32) -> Duration {
        self.base.saturating_mul(1u32 << retry_index.min(16))
    }
}

/// Appends request/response records to a newline-delimited JSON file.
/// Credentials never pass through here.
pub struct TranscriptWriter {
    file: Mutex<std::fs::File>,
}

impl TranscriptWriter {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            file: Mutex::new(std::fs::File::create(path)?),
        })
    }

    fn record(&self, value: serde_json::Value) {
        let mut file = self.file.lock().unwrap();
        let _ = writeln!(file, "{value}");
    }
}

/// A rate-limited, retrying client over any [`ChatBackend`].
pub struct ModelClient {
    backend: Arc<dyn ChatBackend>,
    limits: Limits,
    retry: RetryPolicy,
    transcript: Option<Arc<TranscriptWriter>>,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn ChatBackend>, config: &EndpointConfig) -> Self {
        Self {
            backend,
            limits: Limits::new(config.max_concurrency, config.requests_per_minute),
            retry: RetryPolicy {
                max_retries: config.max_retries,
                base: Duration::from_millis(config.backoff_base_ms),
            },
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, writer: Arc<TranscriptWriter>) -> Self {
        self.transcript = Some(writer);
        self
    }

    /// Sends one (possibly multimodal) request to the target model.
    ///
    /// Retryable failures (rate limits, timeouts) are re-attempted with
    /// exponential backoff up to `max_retries` before surfacing.
    pub async fn query_target(
        &self,
        request: &TargetRequest,
    ) -> Result<TargetResponse, GatewayError> {
        if request.text.is_blank() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        let _permit = self.limits.acquire().await;
        if let Some(t) = &self.transcript {
            t.record(json!({
                "backend": self.backend.label(),
                "event": "request",
                "text": request.text.as_str(),
                "has_image": request.image.is_some(),
            }));
        }
        let mut retries = 0u32;
        let reply = loop {
            match self.backend.complete(request).await {
                Ok(reply) => break reply,
                Err(err) if err.is_retryable() && retries < self.retry.max_retries => {
                    let delay = self.retry.delay_for(retries);
                    tracing::debug!(backend = self.backend.label(), %err, ?delay, "retrying");
                    tokio::time::sleep(delay).await;
                    retries += 1;
                }
                Err(err) => {
                    if let Some(t) = &self.transcript {
                        t.record(json!({
                            "backend": self.backend.label(),
                            "event": "error",
                            "error": err.to_string(),
                        }));
                    }
                    return Err(err);
                }
            }
        };
        let response = response_from(reply);
        if let Some(t) = &self.transcript {
            t.record(json!({
                "backend": self.backend.label(),
                "event": "response",
                "content": response.content,
                "finish_reason": response.finish_reason,
            }));
        }
        Ok(response)
    }

    /// Text-only query, used for the judge and other text backends.
    pub async fn query_text(&self, prompt: &TextPrompt) -> Result<TargetResponse, GatewayError> {
        self.query_target(&TargetRequest::text_only(prompt.clone()))
            .await
    }
}

fn response_from(reply: BackendReply) -> TargetResponse {
    TargetResponse {
        content: reply.content,
        finish_reason: reply.finish_reason,
        latency_ms: reply.latency_ms,
        token_usage: reply.token_usage,
    }
}
