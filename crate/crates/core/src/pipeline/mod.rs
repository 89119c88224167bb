//! Rejection-sampling synthesis of fine-tuning trajectories.
//!
//! Every plan question is rolled out several times, rollouts are scored with
//! the task verifier and only correct ones are exported, up to a per-task cap.
//! Progress lives in `cursor.json` so an interrupted run resumes without
//! emitting duplicates.

mod record;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::client::{ClientSource, RolloutKey, TRAINING_TEMPERATURE};
use crate::grpo::reward;
use crate::par::map_ordered;
use crate::rollout::{default_prompt_variants, run_rollout, RolloutConfig, Termination, Transcript};
use crate::sandbox::{CodeExecutor, DEFAULT_TIMEOUT};
use crate::tasks::{Difficulty, Task, TaskInstance, TaskRegistry};

pub use record::{inline_execution, split_inlined, transcript_from_messages, ExecutionSpan, RecordError, SftRecord};

pub const SFT_FILE: &str = "sft.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CURSOR_FILE: &str = "cursor.json";
const LOCK_FILE: &str = "cursor.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisPlan {
    pub tasks: Vec<String>,
    #[serde(default = "defaults::questions_per_task")]
    pub questions_per_task: u64,
    pub samples_per_question: u32,
    #[serde(default = "defaults::cap_per_task")]
    pub cap_per_task: usize,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "default_prompt_variants")]
    pub prompt_variants: Vec<String>,
    #[serde(default)]
    pub base_seed: u64,
    /// Per-task difficulty knobs; tasks not listed use their defaults.
    #[serde(default)]
    pub difficulty: BTreeMap<String, Difficulty>,
    #[serde(default = "defaults::max_code_calls")]
    pub max_code_calls: u32,
    #[serde(default = "defaults::exec_timeout_secs")]
    pub exec_timeout_secs: f64,
    #[serde(default = "defaults::max_model_turns")]
    pub max_model_turns: u32,
    #[serde(default = "defaults::parallel")]
    pub parallel: usize,
    /// Extra attempts for a rollout that ends in a client or sandbox failure.
    #[serde(default = "defaults::retries")]
    pub retries: u32,
}

mod defaults {
    pub fn questions_per_task() -> u64 {
        50
    }
    pub fn cap_per_task() -> usize {
        70
    }
    pub fn temperature() -> f64 {
        super::TRAINING_TEMPERATURE
    }
    pub fn max_code_calls() -> u32 {
        5
    }
    pub fn exec_timeout_secs() -> f64 {
        super::DEFAULT_TIMEOUT.as_secs_f64()
    }
    pub fn max_model_turns() -> u32 {
        12
    }
    pub fn parallel() -> usize {
        4
    }
    pub fn retries() -> u32 {
        2
    }
}

impl SynthesisPlan {
    pub fn new(tasks: Vec<String>, samples_per_question: u32) -> Self {
        Self {
            tasks,
            questions_per_task: defaults::questions_per_task(),
            samples_per_question,
            cap_per_task: defaults::cap_per_task(),
            temperature: defaults::temperature(),
            prompt_variants: default_prompt_variants(),
            base_seed: 0,
            difficulty: BTreeMap::new(),
            max_code_calls: defaults::max_code_calls(),
            exec_timeout_secs: defaults::exec_timeout_secs(),
            max_model_turns: defaults::max_model_turns(),
            parallel: defaults::parallel(),
            retries: defaults::retries(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.tasks.is_empty() {
            bail!("plan lists no tasks");
        }
        if self.questions_per_task == 0 || self.samples_per_question == 0 {
            bail!("questions_per_task and samples_per_question must be positive");
        }
        if self.cap_per_task == 0 {
            bail!("cap_per_task must be at least 1");
        }
        if self.prompt_variants.is_empty() {
            bail!("plan needs at least one prompt variant");
        }
        if self.parallel == 0 {
            bail!("parallel must be at least 1");
        }
        self.rollout_config(0).validate()?;
        Ok(())
    }

    fn rollout_config(&self, variant: usize) -> RolloutConfig {
        RolloutConfig {
            max_code_calls: self.max_code_calls,
            exec_timeout: Duration::try_from_secs_f64(self.exec_timeout_secs).unwrap_or(Duration::ZERO),
            temperature: self.temperature,
            max_model_turns: self.max_model_turns,
            head_prompt: self.prompt_variants[variant].clone(),
            ..RolloutConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSynthesisStats {
    /// Rollouts that completed without infrastructure failure.
    pub attempted: u64,
    /// Completed rollouts with reward 1.
    pub accepted: u64,
    /// Records written, at most the cap.
    pub emitted: u64,
    /// Rollouts skipped after exhausting retries.
    pub errored: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub per_task: BTreeMap<String, TaskSynthesisStats>,
    pub total_attempted: u64,
    pub total_accepted: u64,
    pub total_emitted: u64,
    pub total_errored: u64,
    /// Tasks without a single accepted rollout.
    pub flagged: Vec<String>,
    /// Rollout keys that failed in this run, with the last error.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Cursor {
    done: BTreeSet<String>,
    stats: BTreeMap<String, TaskSynthesisStats>,
}

fn cursor_key(task: &str, seed: u64, sample: u32) -> String {
    format!("{task}|{seed}|{sample}")
}

impl Cursor {
    fn load(path: &Path) -> anyhow::Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
        }
    }

    fn save(&self, path: &Path) -> anyhow::Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

enum SampleOutcome {
    Completed { transcript: Transcript, reward: f64 },
    Failed(String),
}

struct Question {
    instance: TaskInstance,
}

/// Runs one plan against `out_dir`, resuming from its cursor if present.
pub fn synthesize(
    plan: &SynthesisPlan,
    registry: &TaskRegistry,
    clients: &dyn ClientSource,
    executor: &dyn CodeExecutor,
    out_dir: &Path,
) -> anyhow::Result<SynthesisReport> {
    plan.validate()?;
    let tasks: Vec<Arc<dyn Task>> = plan
        .tasks
        .iter()
        .map(|name| registry.get(name))
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    // Held for the whole run: a second synthesizer on the same directory
    // waits instead of interleaving cursor updates.
    let lock = File::create(out_dir.join(LOCK_FILE))?;
    lock.lock().context("locking cursor")?;

    let cursor_path = out_dir.join(CURSOR_FILE);
    let mut cursor = Cursor::load(&cursor_path)?;
    let mut sft = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join(SFT_FILE))?;
    let mut run_errors = Vec::new();

    for task in &tasks {
        let name = task.name().to_string();
        let difficulty = plan.difficulty.get(&name).cloned().unwrap_or_default();
        let mut next_question = 0u64;
        while next_question < plan.questions_per_task {
            if cursor
                .stats
                .get(&name)
                .is_some_and(|s| s.emitted as usize >= plan.cap_per_task)
            {
                break;
            }
            let end = (next_question + plan.parallel as u64).min(plan.questions_per_task);
            let mut questions = Vec::new();
            for q in next_question..end {
                let seed = plan.base_seed + q;
                questions.push(Question {
                    instance: task.generate(seed, &difficulty)?,
                });
            }
            next_question = end;

            let outcomes = map_ordered(&questions, plan.parallel, |q| {
                (0..plan.samples_per_question)
                    .map(|sample| {
                        let key = cursor_key(&name, q.instance.seed, sample);
                        if cursor.done.contains(&key) {
                            None
                        } else {
                            Some(run_sample(plan, task.as_ref(), &q.instance, sample, clients, executor))
                        }
                    })
                    .collect::<Vec<_>>()
            });

            let stats = cursor.stats.entry(name.clone()).or_default();
            for (q, samples) in questions.iter().zip(outcomes) {
                for (sample, outcome) in (0u32..).zip(samples) {
                    let key = cursor_key(&name, q.instance.seed, sample);
                    match outcome {
                        None => {}
                        Some(SampleOutcome::Failed(e)) => {
                            tracing::warn!(%key, error = %e, "rollout failed after retries; skipping");
                            stats.errored += 1;
                            run_errors.push(format!("{key}: {e}"));
                        }
                        Some(SampleOutcome::Completed { transcript, reward }) => {
                            stats.attempted += 1;
                            cursor.done.insert(key);
                            if reward < 1.0 {
                                continue;
                            }
                            stats.accepted += 1;
                            if (stats.emitted as usize) < plan.cap_per_task {
                                let rec = to_record(&q.instance, sample, plan, transcript);
                                writeln!(sft, "{}", serde_json::to_string(&rec)?)?;
                                stats.emitted += 1;
                            }
                        }
                    }
                }
            }
            sft.flush()?;
            cursor.save(&cursor_path)?;
        }
    }
    lock.unlock()?;

    let report = build_report(&plan.tasks, &cursor.stats, run_errors);
    std::fs::write(out_dir.join(REPORT_FILE), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

fn run_sample(
    plan: &SynthesisPlan,
    task: &dyn Task,
    instance: &TaskInstance,
    sample: u32,
    clients: &dyn ClientSource,
    executor: &dyn CodeExecutor,
) -> SampleOutcome {
    let variant = sample as usize % plan.prompt_variants.len();
    let cfg = plan.rollout_config(variant);
    let key = RolloutKey {
        task: instance.task_name.clone(),
        seed: instance.seed,
        sample,
    };
    let mut last_error = String::new();
    for attempt in 0..=plan.retries {
        let client = clients.client_for(&key);
        let transcript = match run_rollout(instance, client.as_ref(), executor, &cfg) {
            Ok(t) => t,
            Err(e) => return SampleOutcome::Failed(e.to_string()),
        };
        match transcript.termination {
            Termination::GenerationError | Termination::ExecutionErrorTerminal => {
                last_error = transcript.error.clone().unwrap_or_default();
                tracing::debug!(?key, attempt, error = %last_error, "retrying rollout");
            }
            _ => {
                let r = reward(task, instance, &transcript);
                return SampleOutcome::Completed { transcript, reward: r };
            }
        }
    }
    SampleOutcome::Failed(last_error)
}

fn to_record(instance: &TaskInstance, sample: u32, plan: &SynthesisPlan, t: Transcript) -> SftRecord {
    SftRecord {
        task_name: instance.task_name.clone(),
        seed: instance.seed,
        difficulty: instance.difficulty.clone(),
        sample,
        question: instance.question.clone(),
        prompt_variant_id: sample as usize % plan.prompt_variants.len(),
        messages: t.messages(),
        final_answer: t.final_answer.clone().unwrap_or_default(),
        code_calls: t.code_calls,
    }
}

fn build_report(
    tasks: &[String],
    stats: &BTreeMap<String, TaskSynthesisStats>,
    errors: Vec<String>,
) -> SynthesisReport {
    let mut report = SynthesisReport {
        errors,
        ..SynthesisReport::default()
    };
    for name in tasks {
        let mut s = stats.get(name).cloned().unwrap_or_default();
        s.acceptance_rate = if s.attempted == 0 {
            0.0
        } else {
            s.accepted as f64 / s.attempted as f64
        };
        report.total_attempted += s.attempted;
        report.total_accepted += s.accepted;
        report.total_emitted += s.emitted;
        report.total_errored += s.errored;
        if s.accepted == 0 {
            report.flagged.push(name.clone());
        }
        report.per_task.insert(name.clone(), s);
    }
    report
}

/// Reads an `sft.jsonl` file.
pub fn read_records(path: &Path) -> anyhow::Result<Vec<SftRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Drops records whose question and model text repeat an earlier record.
pub fn dedup(records: Vec<SftRecord>) -> Vec<SftRecord> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.content_hash())).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitCheck {
    pub violations: Vec<String>,
}

impl SplitCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies that training and held-out data cannot leak into each other.
pub fn split_check(
    train_tasks: &[String],
    test_tasks: &[String],
    records: &[SftRecord],
    held_out_questions: &[String],
) -> SplitCheck {
    let mut violations = Vec::new();
    let test: HashSet<&str> = test_tasks.iter().map(String::as_str).collect();
    for t in train_tasks.iter().filter(|t| test.contains(t.as_str())) {
        violations.push(format!("task {t} is in both splits"));
    }
    let held: HashSet<String> = held_out_questions.iter().map(|q| record::question_hash(q)).collect();
    for r in records {
        if held.contains(&record::question_hash(&r.question)) {
            violations.push(format!(
                "record {}|{}|{} reuses a held-out question",
                r.task_name, r.seed, r.sample
            ));
        }
    }
    SplitCheck { violations }
}

/// Default output location for a plan file: a sibling directory.
pub fn default_out_dir(plan_path: &Path) -> PathBuf {
    plan_path.with_extension("out")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::ChatMessage;

    fn rec(question: &str, model: &str) -> SftRecord {
        SftRecord {
            task_name: "t".into(),
            seed: 0,
            difficulty: Difficulty::new(),
            sample: 0,
            question: question.into(),
            prompt_variant_id: 0,
            messages: vec![
                ChatMessage::system("s"),
                ChatMessage::user(question),
                ChatMessage::assistant(model),
            ],
            final_answer: "1".into(),
            code_calls: 0,
        }
    }

    #[test]
    fn dedup_examples() {
        assert!(dedup(vec![]).is_empty());
        assert_eq!(dedup(vec![rec("q", "a <<<1>>>"), rec("q", "a <<<1>>>")]).len(), 1);
        assert_eq!(dedup(vec![rec("q", "a <<<1>>>"), rec("q", "b <<<1>>>")]).len(), 2);
    }

    #[test]
    fn split_examples() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(split_check(&s(&["a"]), &s(&["b"]), &[], &[]).ok());
        let v = split_check(&s(&["a", "c"]), &s(&["b", "c"]), &[], &[]);
        assert_eq!(v.violations, vec!["task c is in both splits"]);
        let v = split_check(&s(&["a"]), &s(&["b"]), &[rec("leaked?", "x")], &s(&["leaked?"]));
        assert!(!v.ok());
    }

    #[test]
    fn plan_defaults() {
        let p: SynthesisPlan = serde_json::from_str(r#"{"tasks":["gcd"],"samples_per_question":3}"#).unwrap();
        assert_eq!(p.questions_per_task, 50);
        assert_eq!(p.cap_per_task, 70);
        assert_eq!(p.temperature, 1.0);
        assert_eq!(p.prompt_variants.len(), 2);
        p.validate().unwrap();
        assert!(serde_json::from_str::<SynthesisPlan>(r#"{"tasks":["gcd"]}"#).is_err());
    }
}
