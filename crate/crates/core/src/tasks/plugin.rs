//! External tasks backed by generator and verifier commands.
//!
//! Generator: receives `{"task", "seed", "difficulty"}` on stdin and prints a
//! `TaskInstance` JSON object. Verifier: receives `{"instance", "answer"}` and
//! prints a `Verdict` JSON object, exiting 0.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AnswerKind, Difficulty, Task, TaskError, TaskInstance, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginDescriptor {
    pub name: String,
    /// Argument vector of the generator command.
    pub generator: Vec<String>,
    /// Argument vector of the verifier command.
    pub verifier: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_kind: Option<AnswerKind>,
}

#[derive(Debug)]
pub struct PluginTask {
    descriptor: PluginDescriptor,
}

impl PluginTask {
    pub fn new(descriptor: PluginDescriptor) -> Result<Self, TaskError> {
        let bad = |message: &str| TaskError::Plugin {
            task: descriptor.name.clone(),
            message: message.to_string(),
        };
        if descriptor.name.trim().is_empty() {
            return Err(bad("empty task name"));
        }
        if descriptor.generator.is_empty() {
            return Err(bad("empty generator command"));
        }
        if descriptor.verifier.is_empty() {
            return Err(bad("empty verifier command"));
        }
        Ok(Self { descriptor })
    }

    pub fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn call(&self, argv: &[String], input: &Value) -> Result<Value, String> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start {}: {e}", argv[0]))?;
        let payload = serde_json::to_vec(input).expect("json serializes");
        // A command that exits without reading stdin makes this write fail; the
        // exit status below is the more useful error in that case.
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(&payload);
        }
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                argv[0],
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| format!("invalid JSON from {}: {e}", argv[0]))
    }
}

impl Task for PluginTask {
    fn name(&self) -> &str {
        &self.descriptor.name
    }

    fn answer_kind(&self) -> AnswerKind {
        self.descriptor
            .answer_kind
            .unwrap_or(AnswerKind::String { fold_case: false })
    }

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let fail = |message: String| TaskError::Plugin {
            task: self.descriptor.name.clone(),
            message,
        };
        let input = json!({ "task": self.descriptor.name, "seed": seed, "difficulty": difficulty });
        let raw = self.call(&self.descriptor.generator, &input).map_err(fail)?;
        let inst: TaskInstance = serde_json::from_value(raw).map_err(|e| fail(format!("generator output: {e}")))?;
        if inst.task_name != self.descriptor.name || inst.seed != seed {
            return Err(fail(format!(
                "generator returned instance for ({}, {}), expected ({}, {seed})",
                inst.task_name, inst.seed, self.descriptor.name
            )));
        }
        Ok(inst)
    }

    fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
        let input = json!({ "instance": instance, "answer": answer });
        match self.call(&self.descriptor.verifier, &input) {
            Ok(raw) => {
                serde_json::from_value(raw).unwrap_or_else(|e| Verdict::incorrect(format!("verifier output: {e}")))
            }
            Err(e) => Verdict::incorrect(format!("verifier failed: {e}")),
        }
    }
}
