//! The multi-turn rollout loop: model text alternates with sandboxed code
//! execution until the model answers or a budget runs out.

mod extract;
mod prompt;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatMessage, GenerationRequest, GenerationResult, LlmClient, EVAL_TEMPERATURE};
use crate::sandbox::{CodeExecutor, ExecutionResult, DEFAULT_TIMEOUT};
use crate::tasks::TaskInstance;

pub use extract::{code_blocks, extract_code_block, extract_final_answer};
pub use prompt::{
    default_prompt_variants, BUDGET_NOTICE, FORCED_CODE_SUFFIX, HEAD_PROMPT, INJECTION_PREFIX, TRUNCATION_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Model,
    Execution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    BudgetExhausted,
    GenerationError,
    ExecutionErrorTerminal,
    LengthLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(rename = "task")]
    pub task_name: String,
    pub question: String,
    pub system_prompt: String,
    pub segments: Vec<Segment>,
    pub final_answer: Option<String>,
    pub termination: Termination,
    pub code_calls: u32,
    pub model_turns: u32,
    /// Segment counts at which the budget notice was sent as a user message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub budget_notices: Vec<usize>,
    /// Client or sandbox failure that ended the rollout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Transcript {
    fn start(task: &TaskInstance, system_prompt: &str) -> Self {
        Self {
            task_name: task.task_name.clone(),
            question: task.question.clone(),
            system_prompt: system_prompt.to_string(),
            segments: Vec::new(),
            final_answer: None,
            termination: Termination::GenerationError,
            code_calls: 0,
            model_turns: 0,
            budget_notices: Vec::new(),
            error: None,
        }
    }

    fn push(&mut self, kind: SegmentKind, text: String) {
        let index = self.segments.len();
        match kind {
            SegmentKind::Model => self.model_turns += 1,
            SegmentKind::Execution => self.code_calls += 1,
        }
        self.segments.push(Segment { kind, text, index });
    }

    /// Model texts in order, concatenated.
    pub fn model_text(&self) -> String {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Model)
            .map(|s| s.text.as_str())
            .collect()
    }

    /// The exact conversation the model saw, up to and including the last
    /// segment.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(self.question.clone()),
        ];
        let mut notices = self.budget_notices.iter().peekable();
        for seg in &self.segments {
            while notices.next_if(|&&n| n == seg.index).is_some() {
                out.push(ChatMessage::user(BUDGET_NOTICE));
            }
            out.push(match seg.kind {
                SegmentKind::Model => ChatMessage::assistant(seg.text.clone()),
                SegmentKind::Execution => ChatMessage::tool(seg.text.clone()),
            });
        }
        for _ in notices {
            out.push(ChatMessage::user(BUDGET_NOTICE));
        }
        out
    }

    /// Checks the structural invariants. Returns the first violation.
    pub fn check_invariants(&self, cfg: &RolloutConfig) -> Result<(), String> {
        let executions = self
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Execution)
            .count();
        let models = self.segments.len() - executions;
        if executions != self.code_calls as usize {
            return Err(format!(
                "code_calls {} but {executions} execution segments",
                self.code_calls
            ));
        }
        if models != self.model_turns as usize {
            return Err(format!("model_turns {} but {models} model segments", self.model_turns));
        }
        if self.code_calls > cfg.max_code_calls {
            return Err(format!(
                "code_calls {} over budget {}",
                self.code_calls, cfg.max_code_calls
            ));
        }
        if self.model_turns > cfg.max_model_turns {
            return Err(format!(
                "model_turns {} over limit {}",
                self.model_turns, cfg.max_model_turns
            ));
        }
        if self.final_answer.is_some() != (self.termination == Termination::Answered) {
            return Err("final_answer must be present exactly when answered".into());
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.index != i {
                return Err(format!("segment {i} has index {}", seg.index));
            }
            if seg.kind == SegmentKind::Execution {
                let prev = i.checked_sub(1).map(|p| &self.segments[p]);
                match prev {
                    Some(p) if p.kind == SegmentKind::Model && extract_code_block(&p.text).is_some() => {}
                    _ => return Err(format!("execution segment {i} does not follow a model code block")),
                }
                if !seg.text.starts_with(INJECTION_PREFIX) {
                    return Err(format!("execution segment {i} lacks the injection prefix"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub max_code_calls: u32,
    #[serde(with = "secs_f64")]
    pub exec_timeout: Duration,
    pub temperature: f64,
    pub max_model_turns: u32,
    pub head_prompt: String,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_code_calls: 5,
            exec_timeout: DEFAULT_TIMEOUT,
            temperature: EVAL_TEMPERATURE,
            max_model_turns: 12,
            head_prompt: HEAD_PROMPT.to_string(),
            max_tokens: 4096,
            seed: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("invalid rollout config: {0}")]
    Config(String),
    #[error("task question is empty")]
    EmptyQuestion,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.max_code_calls < 1 {
            return Err(RolloutError::Config("max_code_calls must be at least 1".into()));
        }
        if self.exec_timeout.is_zero() {
            return Err(RolloutError::Config("exec_timeout must be positive".into()));
        }
        if self.max_model_turns <= self.max_code_calls {
            return Err(RolloutError::Config(format!(
                "max_model_turns ({}) must exceed max_code_calls ({})",
                self.max_model_turns, self.max_code_calls
            )));
        }
        Ok(())
    }
}

mod secs_f64 {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// What the engine does with a freshly generated segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Execute(String),
    Finish(String),
    /// Ask for another segment, optionally after sending a user notice.
    Continue {
        notice: Option<String>,
    },
    Abort(Termination),
}

/// Decides the next action. `state` is the transcript before `gen` is appended.
pub fn step(state: &Transcript, gen: &GenerationResult, cfg: &RolloutConfig) -> Action {
    if let Some(answer) = extract_final_answer(&gen.text) {
        return Action::Finish(answer);
    }
    let turns_left = state.model_turns + 1 < cfg.max_model_turns;
    let budget_spent = state.code_calls >= cfg.max_code_calls;
    let code = extract_code_block(&gen.text).filter(|c| !c.trim().is_empty());
    let out_of_turns = if budget_spent {
        Termination::BudgetExhausted
    } else {
        Termination::LengthLimit
    };
    match code {
        Some(_) if !turns_left => Action::Abort(out_of_turns),
        Some(code) if !budget_spent => Action::Execute(code),
        Some(_) => Action::Continue {
            notice: Some(BUDGET_NOTICE.to_string()),
        },
        None if turns_left => Action::Continue { notice: None },
        None => Action::Abort(out_of_turns),
    }
}

fn format_secs(d: Duration) -> String {
    if d.subsec_nanos() == 0 {
        d.as_secs().to_string()
    } else {
        d.as_secs_f64().to_string()
    }
}

/// Renders an execution result as the text injected into the conversation.
pub fn format_injection(result: &ExecutionResult, timeout: Duration) -> String {
    if result.timed_out {
        format!(
            "{INJECTION_PREFIX}Error: execution timed out after {} seconds",
            format_secs(timeout)
        )
    } else if result.exit_code != 0 {
        format!("{INJECTION_PREFIX}Error:\n{}", result.stderr)
    } else if result.truncated {
        format!("{INJECTION_PREFIX}{}{TRUNCATION_MARKER}", result.stdout)
    } else {
        format!("{INJECTION_PREFIX}{}", result.stdout)
    }
}

/// Runs one rollout to termination.
pub fn run_rollout(
    task: &TaskInstance,
    client: &dyn LlmClient,
    executor: &dyn CodeExecutor,
    cfg: &RolloutConfig,
) -> Result<Transcript, RolloutError> {
    cfg.validate()?;
    if task.question.trim().is_empty() {
        return Err(RolloutError::EmptyQuestion);
    }
    let mut t = Transcript::start(task, &cfg.head_prompt);
    loop {
        let mut req = GenerationRequest::new(t.messages(), cfg.temperature, cfg.max_tokens);
        req.seed = cfg.seed;
        let gen = match client.generate(&req) {
            Ok(g) => g,
            Err(e) => {
                tracing::warn!(task = %t.task_name, error = %e, "generation failed; ending rollout");
                t.termination = Termination::GenerationError;
                t.error = Some(e.to_string());
                return Ok(t);
            }
        };
        let action = step(&t, &gen, cfg);
        t.push(SegmentKind::Model, gen.text);
        match action {
            Action::Finish(answer) => {
                t.final_answer = Some(answer);
                t.termination = Termination::Answered;
                return Ok(t);
            }
            Action::Abort(reason) => {
                t.termination = reason;
                return Ok(t);
            }
            Action::Continue { notice } => {
                if notice.is_some() {
                    t.budget_notices.push(t.segments.len());
                }
            }
            Action::Execute(code) => match executor.run_code(&code, cfg.exec_timeout) {
                Ok(result) => {
                    let text = format_injection(&result, cfg.exec_timeout);
                    t.push(SegmentKind::Execution, text);
                }
                Err(e) => {
                    tracing::warn!(task = %t.task_name, error = %e, "sandbox failure; ending rollout");
                    t.termination = Termination::ExecutionErrorTerminal;
                    t.error = Some(e.to_string());
                    return Ok(t);
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::MockClient;
    use crate::sandbox::SandboxError;
    use crate::tasks::Difficulty;

    fn task() -> TaskInstance {
        TaskInstance {
            task_name: "t".into(),
            seed: 0,
            difficulty: Difficulty::new(),
            question: "What is 2+3?".into(),
            ground_truth: serde_json::json!({ "answer": "5" }),
        }
    }

    fn ok(stdout: &str) -> ExecutionResult {
        ExecutionResult {
            stdout: stdout.into(),
            stderr: String::new(),
            exit_code: 0,
            timed_out: false,
            wall_ms: 1,
            truncated: false,
            limit_hit: None,
        }
    }

    fn state(code_calls: u32, model_turns: u32) -> Transcript {
        let mut t = Transcript::start(&task(), HEAD_PROMPT);
        t.code_calls = code_calls;
        t.model_turns = model_turns;
        t
    }

    const CODE: &str = "```python\nprint(1)\n```";

    #[test]
    fn step_precedence_and_budget() {
        let cfg = RolloutConfig::default();
        let both = GenerationResult::stop(format!("{CODE}\n<<<7>>>"));
        assert_eq!(step(&state(0, 0), &both, &cfg), Action::Finish("7".into()));
        let code = GenerationResult::stop(CODE);
        assert_eq!(step(&state(4, 4), &code, &cfg), Action::Execute("print(1)\n".into()));
        assert_eq!(
            step(&state(5, 5), &code, &cfg),
            Action::Continue {
                notice: Some(BUDGET_NOTICE.into())
            }
        );
        assert_eq!(
            step(&state(5, 11), &code, &cfg),
            Action::Abort(Termination::BudgetExhausted)
        );
        assert_eq!(
            step(&state(2, 11), &code, &cfg),
            Action::Abort(Termination::LengthLimit)
        );
        let text = GenerationResult::stop("thinking");
        assert_eq!(step(&state(0, 3), &text, &cfg), Action::Continue { notice: None });
        let blank = GenerationResult::stop("```python\n  \n```");
        assert_eq!(step(&state(0, 0), &blank, &cfg), Action::Continue { notice: None });
    }

    #[test]
    fn injection_formats() {
        let t = Duration::from_secs(60);
        assert_eq!(format_injection(&ok("5\n"), t), "Code Execution Results:\n5\n");
        let mut r = ok("");
        r.exit_code = 1;
        r.stderr = "boom\n".into();
        assert_eq!(format_injection(&r, t), "Code Execution Results:\nError:\nboom\n");
        r.timed_out = true;
        assert_eq!(
            format_injection(&r, t),
            "Code Execution Results:\nError: execution timed out after 60 seconds"
        );
        assert_eq!(
            format_injection(&r, Duration::from_millis(1500)),
            "Code Execution Results:\nError: execution timed out after 1.5 seconds"
        );
        let mut big = ok("abc");
        big.truncated = true;
        assert_eq!(
            format_injection(&big, t),
            "Code Execution Results:\nabc\n[output truncated]"
        );
        assert_eq!(INJECTION_PREFIX.trim_end().len(), 23);
    }

    #[test]
    fn code_then_answer() {
        let client = MockClient::from_script(vec!["```python\nprint(2+3)\n```", "the sum is 5 <<<5>>>"]).unwrap();
        let exec = |code: &str, _t: Duration| -> Result<ExecutionResult, SandboxError> {
            assert_eq!(code, "print(2+3)\n");
            Ok(ok("5\n"))
        };
        let cfg = RolloutConfig::default();
        let t = run_rollout(&task(), &client, &exec, &cfg).unwrap();
        assert_eq!(t.termination, Termination::Answered);
        assert_eq!(t.final_answer.as_deref(), Some("5"));
        assert_eq!((t.code_calls, t.model_turns), (1, 2));
        assert_eq!(t.segments[1].text, "Code Execution Results:\n5\n");
        t.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn messages_place_notices() {
        let mut cfg = RolloutConfig::default();
        cfg.max_code_calls = 1;
        cfg.max_model_turns = 4;
        let client = MockClient::from_script(vec![CODE, CODE, "<<<1>>>"]).unwrap();
        let exec = |_: &str, _: Duration| -> Result<ExecutionResult, SandboxError> { Ok(ok("1\n")) };
        let t = run_rollout(&task(), &client, &exec, &cfg).unwrap();
        assert_eq!(t.budget_notices, vec![3]);
        let roles: Vec<_> = t.messages().iter().map(|m| m.role).collect();
        use crate::client::Role::*;
        assert_eq!(roles, vec![System, User, Assistant, Tool, Assistant, User, Assistant]);
        t.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = RolloutConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RolloutConfig>(&json).unwrap(), cfg);
        let bad = RolloutConfig {
            max_model_turns: 5,
            ..RolloutConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
