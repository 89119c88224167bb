//! Chat-completion clients.
//!
//! A client turns a [`GenerationRequest`] into exactly one generated segment.
//! Two implementations ship: [`HttpClient`] speaks the common
//! chat-completions JSON shape, and [`MockClient`] replays a fixed script
//! (or content-conditional rules) for tests and offline runs.

mod http;
mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpClient, HttpConfig, RetryPolicy, API_KEY_ENV};
pub use mock::{MockClient, MockRule, MockScript};

/// Default sampling temperature for synthesis and RL rollouts.
pub const TRAINING_TEMPERATURE: f64 = 1.0;
/// Default sampling temperature for evaluation.
pub const EVAL_TEMPERATURE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self::new(Role::Tool, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop_sequences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(messages: Vec<ChatMessage>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            messages,
            temperature,
            max_tokens,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }

    /// Checks the request invariants: at least one message, a leading system
    /// message, temperature in `[0, 2]` and a positive token budget.
    pub fn validate(&self) -> Result<(), ClientError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| ClientError::InvalidRequest("messages must be non-empty".into()))?;
        if first.role != Role::System {
            return Err(ClientError::InvalidRequest(
                "first message must have role system".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    StopSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
}

impl GenerationResult {
    pub fn stop(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            token_logprobs: None,
        }
    }

    /// Truncates the text right after the earliest-ending occurrence of any
    /// stop sequence. Choosing the earliest *end* guarantees that no stop
    /// sequence occurs in the kept text except as its suffix.
    pub fn apply_stop_sequences(mut self, stops: &[String]) -> Self {
        let cut = stops
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| self.text.find(s.as_str()).map(|pos| pos + s.len()))
            .min();
        let Some(cut) = cut else {
            return self;
        };
        self.text.truncate(cut);
        if let Some(tokens) = self.token_logprobs.as_mut() {
            truncate_tokens(tokens, cut);
        }
        self.finish_reason = FinishReason::StopSequence;
        self
    }
}

fn truncate_tokens(tokens: &mut Vec<TokenLogprob>, cut: usize) {
    let mut consumed = 0usize;
    let mut keep = 0usize;
    for tok in tokens.iter_mut() {
        if consumed >= cut {
            break;
        }
        let remaining = cut - consumed;
        if tok.token.len() > remaining {
            let mut end = remaining;
            while !tok.token.is_char_boundary(end) {
                end -= 1;
            }
            tok.token.truncate(end);
        }
        consumed += tok.token.len();
        keep += 1;
    }
    tokens.truncate(keep);
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Retryable {
        attempts: u32,
        status: Option<u16>,
        message: String,
        raw: String,
    },
    #[error("protocol error: {message}")]
    Protocol { message: String, raw: String },
    #[error("request rejected with HTTP {status}")]
    Rejected { status: u16, raw: String },
    #[error("mock script exhausted after {calls} call(s)")]
    Exhausted { calls: usize },
    #[error("no mock rule matches the conversation")]
    NoMatchingRule,
    #[error("invalid mock script: {0}")]
    InvalidScript(String),
}

impl ClientError {
    /// Raw payload associated with the failure, if any.
    pub fn raw(&self) -> Option<&str> {
        match self {
            ClientError::Retryable { raw, .. }
            | ClientError::Protocol { raw, .. }
            | ClientError::Rejected { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

/// A chat-completion backend producing one segment per call.
///
/// Implementations must be reentrant: one handle is shared by many
/// concurrent rollouts.
pub trait LlmClient: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError>;
}

impl<T: LlmClient + ?Sized> LlmClient for Arc<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        (**self).generate(req)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        (**self).generate(req)
    }
}

/// Identifies one rollout inside a batch job (evaluation or synthesis).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RolloutKey {
    pub task: String,
    pub seed: u64,
    pub sample: u32,
}

/// Hands out a client per rollout.
///
/// Stateless backends share one handle; scripted mocks hand each rollout a
/// fresh copy so replay stays deterministic under concurrency.
pub trait ClientSource: Send + Sync {
    fn client_for(&self, key: &RolloutKey) -> Arc<dyn LlmClient>;
}

/// Every rollout shares the same client.
pub struct SharedClient(pub Arc<dyn LlmClient>);

impl ClientSource for SharedClient {
    fn client_for(&self, _key: &RolloutKey) -> Arc<dyn LlmClient> {
        Arc::clone(&self.0)
    }
}

impl<F> ClientSource for F
where
    F: Fn(&RolloutKey) -> Arc<dyn LlmClient> + Send + Sync,
{
    fn client_for(&self, key: &RolloutKey) -> Arc<dyn LlmClient> {
        self(key)
    }
}
