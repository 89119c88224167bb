use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    ChatMessage, ClientError, ClientSource, GenerationRequest, GenerationResult, LlmClient, Role, RolloutKey,
    SharedClient,
};

/// A content-conditional reply: the first rule whose `match` substring occurs
/// in the non-system conversation text wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub reply: String,
}

/// On-disk mock description: either a plain JSON array of segments or an
/// array of `{match, reply}` rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockScript {
    Segments(Vec<String>),
    Rules(Vec<MockRule>),
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ClientError> {
        let script: MockScript = serde_json::from_str(text).map_err(|e| ClientError::InvalidScript(e.to_string()))?;
        match &script {
            MockScript::Segments(s) if s.is_empty() => Err(ClientError::InvalidScript(
                "script must contain at least one segment".into(),
            )),
            MockScript::Rules(r) if r.is_empty() => {
                Err(ClientError::InvalidScript("rule list must not be empty".into()))
            }
            _ => Ok(script),
        }
    }

    pub fn build(&self) -> Result<MockClient, ClientError> {
        match self {
            MockScript::Segments(s) => MockClient::from_script(s.clone()),
            MockScript::Rules(r) => MockClient::from_rules(r.clone()),
        }
    }

    /// Client source for batch jobs. Segment scripts are replayed from the
    /// start for every rollout; rule sets are shared.
    pub fn into_source(self) -> Result<Arc<dyn ClientSource>, ClientError> {
        let client = self.build()?;
        Ok(match self {
            MockScript::Segments(_) => {
                let template = client;
                Arc::new(move |_: &RolloutKey| -> Arc<dyn LlmClient> { Arc::new(template.fresh()) })
            }
            MockScript::Rules(_) => Arc::new(SharedClient(Arc::new(client))),
        })
    }
}

#[derive(Debug)]
enum Mode {
    Script(Vec<String>),
    Rules(Vec<MockRule>),
}

/// Deterministic scripted client.
#[derive(Debug)]
pub struct MockClient {
    mode: Mode,
    calls: Mutex<usize>,
}

impl MockClient {
    pub fn from_script<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Result<Self, ClientError> {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(ClientError::InvalidScript(
                "script must contain at least one segment".into(),
            ));
        }
        Ok(Self {
            mode: Mode::Script(segments),
            calls: Mutex::new(0),
        })
    }

    pub fn from_rules(rules: Vec<MockRule>) -> Result<Self, ClientError> {
        if rules.is_empty() {
            return Err(ClientError::InvalidScript("rule list must not be empty".into()));
        }
        Ok(Self {
            mode: Mode::Rules(rules),
            calls: Mutex::new(0),
        })
    }

    /// A copy with the call counter reset.
    pub fn fresh(&self) -> Self {
        let mode = match &self.mode {
            Mode::Script(s) => Mode::Script(s.clone()),
            Mode::Rules(r) => Mode::Rules(r.clone()),
        };
        Self {
            mode,
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("mock counter poisoned")
    }

    fn conversation_text(messages: &[ChatMessage]) -> String {
        messages
            .iter()
            .filter(|m| m.role != Role::System)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl LlmClient for MockClient {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        req.validate()?;
        let text = match &self.mode {
            Mode::Script(segments) => {
                let mut calls = self.calls.lock().expect("mock counter poisoned");
                let idx = *calls;
                let Some(seg) = segments.get(idx) else {
                    return Err(ClientError::Exhausted { calls: idx });
                };
                *calls += 1;
                seg.clone()
            }
            Mode::Rules(rules) => {
                *self.calls.lock().expect("mock counter poisoned") += 1;
                let convo = Self::conversation_text(&req.messages);
                rules
                    .iter()
                    .find(|r| convo.contains(r.pattern.as_str()))
                    .map(|r| r.reply.clone())
                    .ok_or(ClientError::NoMatchingRule)?
            }
        };
        Ok(GenerationResult::stop(text).apply_stop_sequences(&req.stop_sequences))
    }
}
