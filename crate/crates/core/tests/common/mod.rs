#![allow(dead_code)]

pub mod oracle;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use rci::client::{ClientError, ClientSource, GenerationRequest, GenerationResult, LlmClient, MockClient, RolloutKey};
use rci::sandbox::{ExecutionResult, SandboxError};
use rci::tasks::{Difficulty, TaskInstance, TaskRegistry};

pub fn instance(question: &str) -> TaskInstance {
    TaskInstance {
        task_name: "scripted".into(),
        seed: 0,
        difficulty: Difficulty::new(),
        question: question.into(),
        ground_truth: serde_json::json!({ "answer": "5" }),
    }
}

pub fn ok(stdout: &str) -> ExecutionResult {
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

/// Deterministic stand-in for the interpreter, keyed on the script text.
pub fn stub_exec(code: &str, _timeout: Duration) -> Result<ExecutionResult, SandboxError> {
    if code.contains("while True") {
        return Ok(ExecutionResult {
            stdout: String::new(),
            stderr: String::new(),
            exit_code: -9,
            timed_out: true,
            wall_ms: 2000,
            truncated: false,
            limit_hit: None,
        });
    }
    if code.contains("raise") {
        return Ok(ExecutionResult {
            stdout: String::new(),
            stderr: "Traceback (most recent call last):\nValueError: boom\n".into(),
            exit_code: 1,
            timed_out: false,
            wall_ms: 3,
            truncated: false,
            limit_hit: None,
        });
    }
    if code.contains("crash_sandbox") {
        return Err(SandboxError::InvalidRequest("stub failure".into()));
    }
    if code.contains("'x' * 10**7") {
        return Ok(ExecutionResult {
            truncated: true,
            ..ok(&"x".repeat(16))
        });
    }
    Ok(match code.trim() {
        "print(2+3)" => ok("5\n"),
        "print(1)" => ok("1\n"),
        "print(2)" => ok("2\n"),
        _ => ok(&format!("ran {} bytes\n", code.len())),
    })
}

pub fn code(body: &str) -> String {
    format!("```python\n{body}\n```")
}

/// Wraps a client and records every request it sees.
pub struct Recording<C> {
    pub inner: C,
    pub requests: Mutex<Vec<GenerationRequest>>,
}

impl<C> Recording<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }
}

impl<C: LlmClient> LlmClient for Recording<C> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, ClientError> {
        self.requests.lock().unwrap().push(req.clone());
        self.inner.generate(req)
    }
}

/// Client source whose rollouts run one code block and then answer with the
/// task's reference answer, or with a wrong answer for odd samples when
/// `mixed` is set.
pub fn answering_source(mixed: bool) -> Arc<dyn ClientSource> {
    let registry = TaskRegistry::builtin();
    Arc::new(move |key: &RolloutKey| -> Arc<dyn LlmClient> {
        let task = registry.get(&key.task).expect("known task");
        let inst = task.generate(key.seed, &Difficulty::new()).expect("generates");
        let answer = if mixed && key.sample % 2 == 1 {
            "definitely wrong".to_string()
        } else {
            task.reference_answer(&inst).expect("reference answer")
        };
        let script = vec![code("print(1)"), format!("The answer is <<<{answer}>>>")];
        Arc::new(MockClient::from_script(script).expect("non-empty"))
    })
}

pub fn python_available() -> bool {
    std::process::Command::new("python3")
        .arg("-c")
        .arg("pass")
        .status()
        .is_ok_and(|s| s.success())
}
