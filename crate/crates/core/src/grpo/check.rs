//! Audits externally produced trajectory score files.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{group_advantages, grpo_objective, masked_kl, surrogate_terms, GrpoConfig, ScoredTrajectory};

const PERTURBATIONS: usize = 8;
const CENTERING_TOL: f64 = 1e-9;

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub group: Value,
    #[serde(flatten)]
    pub trajectory: ScoredTrajectory,
    /// Marks tokens injected by the executor. These must carry mask 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_execution: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub group: String,
    pub check: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group {}: {} failed: {}", self.group, self.check, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub groups: usize,
    pub trajectories: usize,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn group_key(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Reads a JSONL score file and runs every check on every group.
pub fn grpo_check(path: &Path, cfg: &GrpoConfig) -> anyhow::Result<CheckReport> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow =
            serde_json::from_str(line).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(grpo_check_rows(&rows, cfg))
}

/// Runs the checks over parsed rows, grouped by their `group` field in order
/// of first appearance.
pub fn grpo_check_rows(rows: &[ScoreRow], cfg: &GrpoConfig) -> CheckReport {
    let mut report = CheckReport {
        trajectories: rows.len(),
        ..CheckReport::default()
    };
    if rows.is_empty() {
        report.warnings.push("score file contains no trajectories".into());
        tracing::warn!("score file contains no trajectories");
        return report;
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<&ScoreRow>> = HashMap::new();
    for row in rows {
        let key = group_key(&row.group);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }
    report.groups = order.len();
    for key in order {
        check_group(&key, &groups[&key], cfg, &mut report.violations);
    }
    report
}

fn check_group(key: &str, rows: &[&ScoreRow], cfg: &GrpoConfig, out: &mut Vec<Violation>) {
    let mut fail = |check: &'static str, detail: String| {
        out.push(Violation {
            group: key.to_string(),
            check,
            detail,
        })
    };
    if rows.len() < 2 {
        fail("group size", format!("{} trajectory, need at least 2", rows.len()));
        return;
    }
    let cfg = cfg.with_group_size(rows.len());
    let mut malformed = false;
    for (i, row) in rows.iter().enumerate() {
        if let Err(e) = row.trajectory.validate() {
            fail("trajectory", format!("member {i}: {e}"));
            malformed = true;
        }
        if let Some(flags) = &row.is_execution {
            if flags.len() != row.trajectory.mask.len() {
                fail(
                    "trajectory",
                    format!(
                        "member {i}: {} is_execution flags for {} tokens",
                        flags.len(),
                        row.trajectory.mask.len()
                    ),
                );
                malformed = true;
            }
        }
    }
    if malformed {
        return;
    }
    let group: Vec<ScoredTrajectory> = rows.iter().map(|r| r.trajectory.clone()).collect();
    let rewards: Vec<f64> = group.iter().map(|t| t.reward).collect();
    let advantages = match group_advantages(&rewards, &cfg) {
        Ok(a) => a,
        Err(e) => {
            fail("advantages", e.to_string());
            return;
        }
    };

    let sum: f64 = advantages.iter().sum();
    if sum.abs() > CENTERING_TOL {
        fail("centering", format!("advantages sum to {sum:e}"));
    }

    for (i, (traj, &adv)) in group.iter().zip(&advantages).enumerate() {
        // With a negative advantage the term is unbounded below (ratio * adv for
        // large ratios), so only the side that clipping controls is checked.
        let slack = 1e-12 * adv.abs();
        let (lo, hi) = if adv >= 0.0 {
            (0.0, (1.0 + cfg.clip_eps) * adv)
        } else {
            (f64::NEG_INFINITY, (1.0 - cfg.clip_eps) * adv)
        };
        match surrogate_terms(traj, adv, &cfg) {
            Ok(terms) => {
                if let Some(t) = terms.iter().find(|&&t| t < lo - slack || t > hi + slack) {
                    fail("clip bound", format!("member {i}: term {t} outside [{lo}, {hi}]"));
                }
            }
            Err(e) => fail("clip bound", format!("member {i}: {e}")),
        }
        match masked_kl(traj) {
            Ok(kl) if kl >= 0.0 => {}
            Ok(kl) => fail("kl non-negative", format!("member {i}: KL {kl}")),
            Err(e) => fail("kl non-negative", format!("member {i}: {e}")),
        }
    }

    let base = match grpo_objective(&group, &cfg) {
        Ok(v) => v,
        Err(e) => {
            fail("objective", e.to_string());
            return;
        }
    };
    // Tokens that must not influence the objective: mask-0 tokens, plus any
    // token the file marks as execution output.
    let frozen: Vec<Vec<usize>> = rows
        .iter()
        .map(|r| {
            let m = &r.trajectory.mask;
            (0..m.len())
                .filter(|&t| m[t] == 0 || r.is_execution.as_ref().is_some_and(|f| f[t]))
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772706f);
    for _ in 0..PERTURBATIONS {
        let mut perturbed = group.clone();
        for (traj, idx) in perturbed.iter_mut().zip(&frozen) {
            for &t in idx {
                traj.token_logprobs_policy[t] = -rng.gen_range(0.0..20.0);
                traj.token_logprobs_ref[t] = -rng.gen_range(0.0..20.0);
                traj.token_logprobs_old[t] = -rng.gen_range(0.0..20.0);
            }
        }
        match grpo_objective(&perturbed, &cfg) {
            Ok(v) if v.to_bits() == base.to_bits() => {}
            Ok(v) => {
                let leaky: Vec<String> = rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        r.is_execution
                            .as_ref()
                            .is_some_and(|f| f.iter().zip(&r.trajectory.mask).any(|(&e, &m)| e && m == 1))
                    })
                    .map(|(i, _)| i.to_string())
                    .collect();
                fail(
                    "mask invariance",
                    format!(
                        "objective moved from {base} to {v} when execution tokens were perturbed \
                         (unmasked execution tokens in members [{}])",
                        leaky.join(", ")
                    ),
                );
                return;
            }
            Err(e) => {
                fail("mask invariance", e.to_string());
                return;
            }
        }
    }
}
