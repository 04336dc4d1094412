//! Fully scripted mock backends for deterministic, credential-free runs.
//!
//! A script is an ordered rule list; the first rule matching a request (by
//! request index or substring) decides the reply. Given the same request
//! sequence a script always produces the same responses.

use super::{
    BackendReply, ChatBackend, FinishReason, GatewayError, PerplexityScorer, TargetRequest,
};
use crate::text::TextPrompt;
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleMatch {
    /// Matches the n-th request seen by this backend (0-based; retries count).
    Index(usize),
    /// Matches any request whose text contains the substring.
    Contains(String),
    /// Matches everything.
    Always,
}

impl RuleMatch {
    fn matches(&self, index: usize, text: &str) -> bool {
        match self {
            RuleMatch::Index(i) => *i == index,
            RuleMatch::Contains(needle) => text.contains(needle.as_str()),
            RuleMatch::Always => true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptAction {
    /// Reply normally with the given content.
    Reply(String),
    /// Reply with a provider-side safety block.
    ContentFilter(String),
    /// Fail with a retryable rate-limit error.
    FailRateLimited,
    /// Fail with a timeout.
    FailTimeout,
    /// Fail with a non-retryable protocol error.
    FailProtocol,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub when: RuleMatch,
    pub action: ScriptAction,
}

/// An ordered response script.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockModelScript {
    pub rules: Vec<ScriptRule>,
}

impl MockModelScript {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    /// Replies with fixed content for every request.
    pub fn constant(content: &str) -> Self {
        Self::new(vec![ScriptRule {
            when: RuleMatch::Always,
            action: ScriptAction::Reply(content.to_string()),
        }])
    }

    /// Replies per request index, repeating the final entry afterwards.
    pub fn sequence(replies: &[&str]) -> Self {
        let mut rules: Vec<ScriptRule> = replies
            .iter()
            .enumerate()
            .map(|(i, content)| ScriptRule {
                when: RuleMatch::Index(i),
                action: ScriptAction::Reply(content.to_string()),
            })
            .collect();
        if let Some(last) = replies.last() {
            rules.push(ScriptRule {
                when: RuleMatch::Always,
                action: ScriptAction::Reply(last.to_string()),
            });
        }
        Self::new(rules)
    }

    /// Replies with `matched` when the request contains `needle`, otherwise
    /// `fallback`.
    pub fn keyword(needle: &str, matched: &str, fallback: &str) -> Self {
        Self::new(vec![
            ScriptRule {
                when: RuleMatch::Contains(needle.to_string()),
                action: ScriptAction::Reply(matched.to_string()),
            },
            ScriptRule {
                when: RuleMatch::Always,
                action: ScriptAction::Reply(fallback.to_string()),
            },
        ])
    }

    fn action_for(&self, index: usize, text: &str) -> Option<&ScriptAction> {
        self.rules
            .iter()
            .find(|r| r.when.matches(index, text))
            .map(|r| &r.action)
    }
}

/// One request observed by a mock, for test assertions.
#[derive(Debug, Clone)]
pub struct MockLogEntry {
    pub index: usize,
    pub text: String,
    pub image_bytes: Option<Vec<u8>>,
}

/// Concurrency and request observation shared by the mock backends.
#[derive(Debug, Default)]
pub struct MockInstrumentation {
    requests: Mutex<Vec<MockLogEntry>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    next_index: AtomicUsize,
}

impl MockInstrumentation {
    fn enter(&self, text: &str, image_bytes: Option<Vec<u8>>) -> usize {
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(current, Ordering::SeqCst);
        let index = self.next_index.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(MockLogEntry {
            index,
            text: text.to_string(),
            image_bytes,
        });
        index
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    /// Highest number of simultaneously in-flight requests observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<MockLogEntry> {
        self.requests.lock().unwrap().clone()
    }
}

/// A scripted chat backend. Never opens a network connection.
pub struct ScriptedBackend {
    label: String,
    script: MockModelScript,
    instrumentation: MockInstrumentation,
    /// Artificial hold inside each call so concurrency tests can observe
    /// overlap; zero by default.
    hold: std::time::Duration,
}

impl ScriptedBackend {
    pub fn new(label: &str, script: MockModelScript) -> Self {
        Self {
            label: label.to_string(),
            script,
            instrumentation: MockInstrumentation::default(),
            hold: std::time::Duration::ZERO,
        }
    }

    pub fn with_hold(mut self, hold: std::time::Duration) -> Self {
        self.hold = hold;
        self
    }

    pub fn instrumentation(&self) -> &MockInstrumentation {
        &self.instrumentation
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn complete(&self, request: &TargetRequest) -> Result<BackendReply, GatewayError> {
        let index = self.instrumentation.enter(
            request.text.as_str(),
            request.image.as_ref().map(|a| a.data.clone()),
        );
        if !self.hold.is_zero() {
            tokio::time::sleep(self.hold).await;
        }
        let action = self
            .script
            .action_for(index, request.text.as_str())
            .cloned();
        self.instrumentation.exit();
        match action {
            Some(ScriptAction::Reply(content)) => Ok(BackendReply {
                content,
                finish_reason: FinishReason::Stop,
                latency_ms: 0,
                token_usage: None,
            }),
            Some(ScriptAction::ContentFilter(content)) => Ok(BackendReply {
                content,
                finish_reason: FinishReason::ContentFilter,
                latency_ms: 0,
                token_usage: None,
            }),
            Some(ScriptAction::FailRateLimited) => {
                Err(GatewayError::RateLimited("scripted failure".into()))
            }
            Some(ScriptAction::FailTimeout) => {
                Err(GatewayError::Timeout("scripted failure".into()))
            }
            Some(ScriptAction::FailProtocol) => {
                Err(GatewayError::Protocol("scripted failure".into()))
            }
            None => Err(GatewayError::Protocol(format!(
                "mock `{}` has no rule for request {index}",
                self.label
            ))),
        }
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// A scripted perplexity backend: rules map to scores instead of replies.
pub struct ScriptedScorer {
    rules: Vec<(RuleMatch, f64)>,
    fallback: f64,
    instrumentation: MockInstrumentation,
}

impl ScriptedScorer {
    pub fn constant(score: f64) -> Self {
        Self {
            rules: Vec::new(),
            fallback: score,
            instrumentation: MockInstrumentation::default(),
        }
    }

    pub fn with_rules(rules: Vec<(RuleMatch, f64)>, fallback: f64) -> Self {
        Self {
            rules,
            fallback,
            instrumentation: MockInstrumentation::default(),
        }
    }

    pub fn instrumentation(&self) -> &MockInstrumentation {
        &self.instrumentation
    }
}

#[async_trait]
impl PerplexityScorer for ScriptedScorer {
    async fn score(&self, text: &TextPrompt) -> Result<f64, GatewayError> {
        let index = self.instrumentation.enter(text.as_str(), None);
        self.instrumentation.exit();
        let score = self
            .rules
            .iter()
            .find(|(when, _)| when.matches(index, text.as_str()))
            .map(|(_, score)| *score)
            .unwrap_or(self.fallback);
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str) -> TargetRequest {
        TargetRequest::text_only(text.into())
    }

    #[tokio::test]
    async fn scripted_reply_is_returned_verbatim() {
        let backend = ScriptedBackend::new("mock", MockModelScript::constant("I cannot help"));
        let reply = backend.complete(&request("anything")).await.unwrap();
        assert_eq!(reply.content, "I cannot help");
        assert_eq!(reply.finish_reason, FinishReason::Stop);
    }

    #[tokio::test]
    async fn sequence_scripts_key_on_request_index() {
        let backend = ScriptedBackend::new("mock", MockModelScript::sequence(&["a", "b"]));
        assert_eq!(backend.complete(&request("x")).await.unwrap().content, "a");
        assert_eq!(backend.complete(&request("x")).await.unwrap().content, "b");
        // Past the end the final entry repeats.
        assert_eq!(backend.complete(&request("x")).await.unwrap().content, "b");
    }

    #[tokio::test]
    async fn keyword_scripts_match_substrings() {
        let backend =
            ScriptedBackend::new("judge", MockModelScript::keyword("Sure, here", "5", "1"));
        assert_eq!(
            backend
                .complete(&request("Sure, here is the plan"))
                .await
                .unwrap()
                .content,
            "5"
        );
        assert_eq!(backend.complete(&request("no")).await.unwrap().content, "1");
    }

    #[tokio::test]
    async fn same_request_sequence_gives_same_responses() {
        let script = MockModelScript::sequence(&["one", "two", "three"]);
        let mut first = Vec::new();
        let mut second = Vec::new();
        for outputs in [&mut first, &mut second] {
            let backend = ScriptedBackend::new("mock", script.clone());
            for _ in 0..3 {
                outputs.push(backend.complete(&request("q")).await.unwrap().content);
            }
        }
        assert_eq!(first, second);
    }

    #[tokio::test]
    async fn scorer_rules_map_markers_to_scores() {
        let scorer = ScriptedScorer::with_rules(
            vec![(RuleMatch::Contains("trigram".into()), 50.0)],
            900.0,
        );
        assert_eq!(scorer.score(&"has trigram marker".into()).await.unwrap(), 50.0);
        assert_eq!(scorer.score(&"word-shuffled".into()).await.unwrap(), 900.0);
    }

    #[tokio::test]
    async fn scorer_fixture_orders_canonical_below_trigram_below_word_wise() {
        let scorer = ScriptedScorer::with_rules(
            vec![
                (RuleMatch::Contains("canonical".into()), 12.0),
                (RuleMatch::Contains("trigram".into()), 50.0),
            ],
            900.0,
        );
        let canonical = scorer.score(&"canonical".into()).await.unwrap();
        let trigram = scorer.score(&"trigram".into()).await.unwrap();
        let word_wise = scorer.score(&"word-shuffled".into()).await.unwrap();
        assert!(canonical < trigram && trigram < word_wise);
    }
}
