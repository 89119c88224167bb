//! Evaluation runs, persisted transcripts and the scores derived from them.
//!
//! `report.json` is a pure function of `transcripts.jsonl`, so rescoring a
//! run reproduces it byte for byte. Run metadata that is not derivable from
//! the transcripts (configuration, timestamp) goes to `run_meta.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientSource, RolloutKey};
use crate::grpo::reward;
use crate::par::map_ordered;
use crate::rollout::{run_rollout, RolloutConfig, Termination, Transcript};
use crate::sandbox::CodeExecutor;
use crate::tasks::{Difficulty, Task};

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "run_meta.json";

/// One persisted rollout with its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub seed: u64,
    pub difficulty: Difficulty,
    #[serde(flatten)]
    pub transcript: Transcript,
    pub reward: f64,
    pub wall_ms: u64,
}

impl TranscriptRow {
    /// The rollout ended on an infrastructure failure rather than a model outcome.
    pub fn errored(&self) -> bool {
        matches!(
            self.transcript.termination,
            Termination::GenerationError | Termination::ExecutionErrorTerminal
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric over an empty transcript set")]
    Empty,
}

/// Fraction of transcripts with at least one execution.
pub fn code_usage_ratio<'a>(transcripts: impl IntoIterator<Item = &'a Transcript>) -> Result<f64, MetricError> {
    let (mut n, mut used) = (0usize, 0usize);
    for t in transcripts {
        n += 1;
        used += usize::from(t.code_calls > 0);
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    Ok(used as f64 / n as f64)
}

/// Mean number of model turns.
pub fn mean_turns<'a>(transcripts: impl IntoIterator<Item = &'a Transcript>) -> Result<f64, MetricError> {
    let (mut n, mut total) = (0usize, 0u64);
    for t in transcripts {
        n += 1;
        total += u64::from(t.model_turns);
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    Ok(total as f64 / n as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub n: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub mean_code_calls: f64,
    pub code_usage_ratio: f64,
    pub mean_model_turns: f64,
    pub mean_wall_ms: f64,
    /// Rows that ended on an infrastructure failure.
    pub errored: u64,
    pub terminations: BTreeMap<Termination, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: BTreeMap<String, TaskScore>,
    /// Unweighted mean of per-task success rates.
    pub overall: f64,
    /// Errored rows were excluded from `n` rather than counted as failures.
    pub strict: bool,
}

impl EvalReport {
    pub fn from_rows(rows: &[TranscriptRow], strict: bool) -> Self {
        let mut by_task: BTreeMap<&str, Vec<&TranscriptRow>> = BTreeMap::new();
        for row in rows {
            by_task.entry(&row.transcript.task_name).or_default().push(row);
        }
        let mut per_task = BTreeMap::new();
        for (task, all) in by_task {
            let errored = all.iter().filter(|r| r.errored()).count() as u64;
            let counted: Vec<&TranscriptRow> = all.iter().copied().filter(|r| !strict || !r.errored()).collect();
            let n = counted.len() as u64;
            let mut score = TaskScore {
                n,
                errored,
                ..TaskScore::default()
            };
            for r in &all {
                *score.terminations.entry(r.transcript.termination).or_default() += 1;
            }
            if n > 0 {
                let nf = n as f64;
                score.successes = counted.iter().filter(|r| r.reward >= 1.0).count() as u64;
                score.success_rate = score.successes as f64 / nf;
                score.mean_code_calls = counted.iter().map(|r| f64::from(r.transcript.code_calls)).sum::<f64>() / nf;
                let ts = counted.iter().map(|r| &r.transcript);
                score.code_usage_ratio = code_usage_ratio(ts.clone()).expect("non-empty");
                score.mean_model_turns = mean_turns(ts).expect("non-empty");
                score.mean_wall_ms = counted.iter().map(|r| r.wall_ms as f64).sum::<f64>() / nf;
            }
            per_task.insert(task.to_string(), score);
        }
        let rates: Vec<f64> = per_task.values().filter(|s| s.n > 0).map(|s| s.success_rate).collect();
        let overall = if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        Self {
            per_task,
            overall,
            strict,
        }
    }

    pub fn errored(&self) -> u64 {
        self.per_task.values().map(|s| s.errored).sum()
    }

    /// Canonical serialized form, as written to `report.json`.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// What to evaluate and how.
#[derive(Clone)]
pub struct EvalSpec {
    pub tasks: Vec<Arc<dyn Task>>,
    pub n_per_task: u64,
    pub base_seed: u64,
    pub difficulty: BTreeMap<String, Difficulty>,
    pub rollout: RolloutConfig,
    pub parallel: usize,
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta<'a> {
    timestamp: String,
    tasks: Vec<&'a str>,
    n_per_task: u64,
    base_seed: u64,
    difficulty: &'a BTreeMap<String, Difficulty>,
    rollout: &'a RolloutConfig,
    parallel: usize,
    strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<&'a str>,
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub rows: Vec<TranscriptRow>,
}

/// Runs every task on seeds `base_seed..base_seed + n`, writes transcripts,
/// then scores them.
pub fn eval_run(
    spec: &EvalSpec,
    clients: &dyn ClientSource,
    executor: &dyn CodeExecutor,
    out_dir: &Path,
    backend: Option<&str>,
) -> anyhow::Result<EvalOutcome> {
    spec.rollout.validate()?;
    anyhow::ensure!(spec.parallel >= 1, "parallel must be at least 1");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut work = Vec::new();
    for task in &spec.tasks {
        let difficulty = spec.difficulty.get(task.name()).cloned().unwrap_or_default();
        for i in 0..spec.n_per_task {
            work.push((Arc::clone(task), task.generate(spec.base_seed + i, &difficulty)?));
        }
    }

    let rows = map_ordered(
        &work,
        spec.parallel,
        |(task, instance)| -> anyhow::Result<TranscriptRow> {
            let key = RolloutKey {
                task: instance.task_name.clone(),
                seed: instance.seed,
                sample: 0,
            };
            let client = clients.client_for(&key);
            let started = Instant::now();
            let transcript = run_rollout(instance, client.as_ref(), executor, &spec.rollout)?;
            let wall_ms = started.elapsed().as_millis() as u64;
            let r = reward(task.as_ref(), instance, &transcript);
            Ok(TranscriptRow {
                seed: instance.seed,
                difficulty: instance.difficulty.clone(),
                transcript,
                reward: r,
                wall_ms,
            })
        },
    )
    .into_iter()
    .collect::<anyhow::Result<Vec<_>>>()?;

    write_rows(&out_dir.join(TRANSCRIPTS_FILE), &rows)?;
    let report = EvalReport::from_rows(&rows, spec.strict);
    std::fs::write(out_dir.join(REPORT_FILE), report.to_json())?;
    let meta = RunMeta {
        timestamp: chrono::Utc::now().to_rfc3339(),
        tasks: spec.tasks.iter().map(|t| t.name()).collect(),
        n_per_task: spec.n_per_task,
        base_seed: spec.base_seed,
        difficulty: &spec.difficulty,
        rollout: &spec.rollout,
        parallel: spec.parallel,
        strict: spec.strict,
        backend,
    };
    std::fs::write(out_dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(EvalOutcome { report, rows })
}

pub fn write_rows(path: &Path, rows: &[TranscriptRow]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<TranscriptRow>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(rows)
}

/// Recomputes the report from a persisted transcripts file.
pub fn rescore(path: &Path, strict: bool) -> anyhow::Result<EvalReport> {
    Ok(EvalReport::from_rows(&read_rows(path)?, strict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{Segment, SegmentKind, HEAD_PROMPT};

    fn transcript(task: &str, code_calls: u32, model_turns: u32, termination: Termination) -> Transcript {
        let mut segments = Vec::new();
        for i in 0..model_turns as usize {
            segments.push(Segment {
                kind: SegmentKind::Model,
                text: "m".into(),
                index: segments.len(),
            });
            if i < code_calls as usize {
                segments.push(Segment {
                    kind: SegmentKind::Execution,
                    text: "Code Execution Results:\n".into(),
                    index: segments.len(),
                });
            }
        }
        Transcript {
            task_name: task.into(),
            question: "q".into(),
            system_prompt: HEAD_PROMPT.into(),
            segments,
            final_answer: (termination == Termination::Answered).then(|| "1".into()),
            termination,
            code_calls,
            model_turns,
            budget_notices: vec![],
            error: None,
        }
    }

    fn row(task: &str, reward: f64, termination: Termination) -> TranscriptRow {
        TranscriptRow {
            seed: 0,
            difficulty: Difficulty::new(),
            transcript: transcript(task, 1, 2, termination),
            reward,
            wall_ms: 10,
        }
    }

    #[test]
    fn usage_ratio_counts_questions() {
        let ts = [
            transcript("a", 2, 3, Termination::Answered),
            transcript("a", 0, 1, Termination::Answered),
            transcript("a", 1, 2, Termination::Answered),
            transcript("a", 0, 1, Termination::Answered),
        ];
        assert_eq!(code_usage_ratio(&ts).unwrap(), 0.5);
        assert_eq!(code_usage_ratio(&ts[1..2]).unwrap(), 0.0);
        assert_eq!(code_usage_ratio(&ts[2..3]).unwrap(), 1.0);
        assert_eq!(code_usage_ratio(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn turns_mean() {
        let ts = [
            transcript("a", 0, 1, Termination::Answered),
            transcript("a", 0, 3, Termination::Answered),
        ];
        assert_eq!(mean_turns(&ts).unwrap(), 2.0);
        assert_eq!(mean_turns(&ts[..1]).unwrap(), 1.0);
        assert_eq!(mean_turns(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn equal_task_weighting_and_strict() {
        let rows = vec![
            row("a", 1.0, Termination::Answered),
            row("b", 0.0, Termination::Answered),
            row("b", 1.0, Termination::Answered),
            row("b", 0.0, Termination::GenerationError),
        ];
        let r = EvalReport::from_rows(&rows, false);
        assert_eq!(r.per_task["b"].n, 3);
        assert!((r.overall - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        let s = EvalReport::from_rows(&rows, true);
        assert_eq!(s.per_task["b"].n, 2);
        assert_eq!(s.per_task["b"].errored, 1);
        assert_eq!(s.overall, 0.75);

        let mut more = rows.clone();
        more.push(row("a", 0.0, Termination::Answered));
        let r2 = EvalReport::from_rows(&more, false);
        assert_eq!(r2.per_task["b"], r.per_task["b"]);
    }
}
