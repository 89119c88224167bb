use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{ClientError, FinishReason, GenerationRequest, GenerationResult, LlmClient, Role, TokenLogprob};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "RCI_API_KEY";

/// Exponential backoff for transport failures and HTTP 429/5xx.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts is `max_retries + 1`.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.mul_f64(self.factor.powi(retry as i32))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub request_logprobs: bool,
}

impl HttpConfig {
    /// Config for `url` with the bearer token taken from [`API_KEY_ENV`].
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(600),
            retry: RetryPolicy::default(),
            request_logprobs: false,
        }
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpClient {
    config: HttpConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(GenerationResult),
    Retry {
        status: Option<u16>,
        message: String,
        raw: String,
    },
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn wire_body(&self, req: &GenerationRequest) -> Value {
        // Execution output travels as user text; plain chat endpoints reject
        // tool messages that lack a tool-call id.
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User | Role::Tool => "user",
                    Role::Assistant => "assistant",
                };
                json!({ "role": role, "content": m.content })
            })
            .collect();
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if !req.stop_sequences.is_empty() {
            body["stop"] = json!(req.stop_sequences);
        }
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        if self.config.request_logprobs {
            body["logprobs"] = json!(true);
        }
        body
    }

    fn attempt(&self, body: &str) -> Result<Attempt, ClientError> {
        let mut call = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match call.send(body) {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    raw: String::new(),
                })
            }
        };
        let status = resp.status().as_u16();
        let raw = match resp.body_mut().read_to_string() {
            Ok(s) => s,
            Err(e) => {
                return Ok(Attempt::Retry {
                    status: Some(status),
                    message: format!("reading body: {e}"),
                    raw: String::new(),
                })
            }
        };
        if status == 429 || (500..600).contains(&status) {
            return Ok(Attempt::Retry {
                status: Some(status),
                message: format!("HTTP {status}"),
                raw,
            });
        }
        if !(200..300).contains(&status) {
            return Err(ClientError::Rejected { status, raw });
        }
        parse_completion(&raw).map(Attempt::Done)
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireToken>>,
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    logprob: f64,
}

fn parse_completion(raw: &str) -> Result<GenerationResult, ClientError> {
    let protocol = |message: String| ClientError::Protocol {
        message,
        raw: raw.to_string(),
    };
    let wire: WireResponse = serde_json::from_str(raw).map_err(|e| protocol(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| protocol("response has no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| protocol("choice has no message content".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    let token_logprobs = match choice.logprobs.and_then(|l| l.content) {
        Some(tokens) => {
            if let Some(bad) = tokens.iter().find(|t| t.logprob.is_nan() || t.logprob > 0.0) {
                return Err(protocol(format!("logprob {} is not <= 0", bad.logprob)));
            }
            Some(
                tokens
                    .into_iter()
                    .map(|t| TokenLogprob {
                        token: t.token,
                        logprob: t.logprob,
                    })
                    .collect(),
            )
        }
        None => None,
    };
    Ok(GenerationResult {
        text,
        finish_reason,
        token_logprobs,
    })
}

impl LlmClient for HttpClient {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        req.validate()?;
        let body = self.wire_body(req).to_string();
        let policy = &self.config.retry;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.attempt(&body)? {
                Attempt::Done(res) => return Ok(res.apply_stop_sequences(&req.stop_sequences)),
                Attempt::Retry { status, message, raw } => {
                    if attempts > policy.max_retries {
                        return Err(ClientError::Retryable {
                            attempts,
                            status,
                            message,
                            raw,
                        });
                    }
                    tracing::warn!(attempts, %message, "chat completion failed, backing off");
                    std::thread::sleep(policy.backoff(attempts - 1));
                }
            }
        }
    }
}
