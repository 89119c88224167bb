//! Procedural reasoning tasks with rule-based verifiers.
//!
//! Each built-in task generates seed-reproducible instances together with a
//! hidden ground truth, and judges answers by exact match against a canonical
//! form or by checking the puzzle constraints directly. External tasks plug in
//! through [`PluginDescriptor`].

mod arithmetic;
pub mod expr;
mod normalize;
mod plugin;
mod puzzles;
mod registry;
mod text;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use arithmetic::{ChainSum, CountBits, Gcd, NumberSorting, ObjectCounting};
pub use normalize::{normalize_answer, AnswerKind, NormalizeError};
pub use plugin::{PluginDescriptor, PluginTask};
pub use puzzles::{Countdown, EightQueens, Game24};
pub use registry::TaskRegistry;
pub use text::{Letters, MatrixRotation, SpellBackward, StringInsertion};

pub(crate) type TaskRng = ChaCha8Rng;

pub(crate) fn task_rng(seed: u64) -> TaskRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task `{name}`; known tasks: {}", known.join(", "))]
    UnknownTask { name: String, known: Vec<String> },
    #[error("task `{0}` is already registered")]
    Duplicate(String),
    #[error("invalid difficulty for `{task}`: {message}")]
    InvalidDifficulty { task: String, message: String },
    #[error("generation failed for `{task}`: {message}")]
    Generation { task: String, message: String },
    #[error("plugin `{task}` failed: {message}")]
    Plugin { task: String, message: String },
}

/// Task-specific difficulty knobs as a JSON object. Missing knobs take the
/// task's defaults; generated instances record the fully resolved set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Difficulty(pub Map<String, Value>);

impl Difficulty {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, knob: &str, value: impl Into<Value>) -> Self {
        self.0.insert(knob.to_string(), value.into());
        self
    }

    pub(crate) fn resolve<K>(&self, task: &str) -> Result<(K, Difficulty), TaskError>
    where
        K: DeserializeOwned + Serialize,
    {
        let knobs: K =
            serde_json::from_value(Value::Object(self.0.clone())).map_err(|e| TaskError::InvalidDifficulty {
                task: task.to_string(),
                message: e.to_string(),
            })?;
        let resolved = match serde_json::to_value(&knobs).expect("knobs serialize") {
            Value::Object(m) => Difficulty(m),
            _ => unreachable!("knob structs serialize to objects"),
        };
        Ok((knobs, resolved))
    }
}

/// A generated question with its hidden ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    #[serde(rename = "task")]
    pub task_name: String,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub question: String,
    pub ground_truth: Value,
}

impl TaskInstance {
    pub(crate) fn truth<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.ground_truth.clone()).map_err(|e| format!("malformed ground truth: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub reason: String,
}

impl Verdict {
    pub fn correct() -> Self {
        Self {
            correct: true,
            reason: "ok".into(),
        }
    }

    pub fn incorrect(reason: impl Into<String>) -> Self {
        Self {
            correct: false,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.correct { "correct" } else { "incorrect" };
        write!(f, "{tag}: {}", self.reason)
    }
}

/// A task family: a generator plus its rule-based verifier.
pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    fn answer_kind(&self) -> AnswerKind;

    /// Same `(seed, difficulty)` must always yield the identical instance.
    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError>;

    /// Judges a raw answer. Pure in `(instance, answer)`.
    fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict;

    /// A correct answer computed by the task's internal reference solver.
    fn reference_answer(&self, _instance: &TaskInstance) -> Option<String> {
        None
    }
}

/// Compares canonical forms of `answer` and `expected`.
pub(crate) fn exact_match(answer: &str, expected: &str, kind: AnswerKind) -> Verdict {
    let got = match normalize_answer(answer, kind) {
        Ok(g) => g,
        Err(e) => return Verdict::incorrect(format!("normalize: {e}")),
    };
    let want = match normalize_answer(expected, kind) {
        Ok(w) => w,
        Err(e) => return Verdict::incorrect(format!("malformed ground truth: {e}")),
    };
    if got == want {
        Verdict::correct()
    } else {
        Verdict::incorrect(format!("expected {want}, got {got}"))
    }
}

pub(crate) fn instance(
    task: &str,
    seed: u64,
    difficulty: Difficulty,
    question: String,
    ground_truth: Value,
) -> TaskInstance {
    TaskInstance {
        task_name: task.to_string(),
        seed,
        difficulty,
        question,
        ground_truth,
    }
}

pub(crate) fn check_range<T: PartialOrd + fmt::Display>(
    task: &str,
    knob: &str,
    lo: T,
    hi: T,
    floor: T,
    ceil: T,
) -> Result<(), TaskError> {
    if lo > hi || lo < floor || hi > ceil {
        return Err(TaskError::InvalidDifficulty {
            task: task.to_string(),
            message: format!("{knob} range [{lo}, {hi}] must lie within [{floor}, {ceil}] and be ordered"),
        });
    }
    Ok(())
}

/// Joins items as "a, b and c".
pub(crate) fn english_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
