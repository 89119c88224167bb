//! Masked GRPO objective values over recorded trajectories.
//!
//! Only tokens with mask 1 (model-generated) contribute. Execution-injected
//! tokens carry mask 0 and are never read by the surrogate or the KL term.

mod check;
pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rollout::{Termination, Transcript};
use crate::tasks::{Task, TaskInstance};

pub use check::{grpo_check, grpo_check_rows, CheckReport, ScoreRow, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("expected {expected} rewards, got {got}")]
    GroupSize { expected: usize, got: usize },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub token_logprobs_policy: Vec<f64>,
    pub token_logprobs_ref: Vec<f64>,
    pub token_logprobs_old: Vec<f64>,
    /// 1 for model-generated tokens, 0 for execution-injected tokens.
    pub mask: Vec<u8>,
    pub reward: f64,
}

impl ScoredTrajectory {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::Trajectory(m));
        let n = self.mask.len();
        if n == 0 {
            return bad("no tokens".into());
        }
        for (name, v) in [
            ("policy", &self.token_logprobs_policy),
            ("ref", &self.token_logprobs_ref),
            ("old", &self.token_logprobs_old),
        ] {
            if v.len() != n {
                return bad(format!("{name} has {} logprobs for {n} mask entries", v.len()));
            }
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x > 0.0) {
                return bad(format!("{name} logprob {x} at token {i} is not a finite value <= 0"));
            }
        }
        if let Some(m) = self.mask.iter().find(|&&m| m > 1) {
            return bad(format!("mask value {m} is not 0 or 1"));
        }
        if !self.mask.contains(&1) {
            return bad("no model-generated tokens (mask is all zero)".into());
        }
        if !self.reward.is_finite() {
            return bad(format!("reward {} is not finite", self.reward));
        }
        Ok(())
    }

    fn masked(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m == 1).map(|(i, _)| i)
    }

    fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub advantage_eps: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 5,
            clip_eps: 0.2,
            kl_coeff: 0.001,
            advantage_eps: 1e-8,
        }
    }
}

impl GrpoConfig {
    pub fn with_group_size(&self, group_size: usize) -> Self {
        Self {
            group_size,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::Config(format!("group size {} < 2", self.group_size)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps.is_finite()) {
            return Err(GrpoError::Config(format!(
                "clip epsilon {} must be positive",
                self.clip_eps
            )));
        }
        if !(self.kl_coeff >= 0.0 && self.kl_coeff.is_finite()) {
            return Err(GrpoError::Config(format!(
                "KL coefficient {} must be >= 0",
                self.kl_coeff
            )));
        }
        if !(self.advantage_eps > 0.0 && self.advantage_eps.is_finite()) {
            return Err(GrpoError::Config(format!(
                "advantage epsilon {} must be positive",
                self.advantage_eps
            )));
        }
        Ok(())
    }
}

/// Group-relative advantages `(r - mean) / (std_pop + eps)`.
pub fn group_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>, GrpoError> {
    cfg.validate()?;
    if rewards.len() != cfg.group_size {
        return Err(GrpoError::GroupSize {
            expected: cfg.group_size,
            got: rewards.len(),
        });
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::Trajectory(format!("reward {r} is not finite")));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    // A second centering pass removes the rounding left in the first mean.
    let residual = dev.iter().sum::<f64>() / n;
    dev.iter_mut().for_each(|d| *d -= residual);
    let std = (dev.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    Ok(dev.into_iter().map(|d| d / (std + cfg.advantage_eps)).collect())
}

/// Clipped surrogate term of one token.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Per-token surrogate terms for the masked tokens, in token order.
pub fn surrogate_terms(traj: &ScoredTrajectory, advantage: f64, cfg: &GrpoConfig) -> Result<Vec<f64>, GrpoError> {
    traj.validate()?;
    if !advantage.is_finite() {
        return Err(GrpoError::Trajectory(format!("advantage {advantage} is not finite")));
    }
    Ok(traj
        .masked()
        .map(|i| {
            let ratio = (traj.token_logprobs_policy[i] - traj.token_logprobs_old[i]).exp();
            clipped_term(ratio, advantage, cfg.clip_eps)
        })
        .collect())
}

/// Mean clipped surrogate over the model-generated tokens.
pub fn masked_surrogate(traj: &ScoredTrajectory, advantage: f64, cfg: &GrpoConfig) -> Result<f64, GrpoError> {
    let terms = surrogate_terms(traj, advantage, cfg)?;
    Ok(terms.iter().sum::<f64>() / traj.masked_count() as f64)
}

/// k3 estimate of KL(policy || ref) for one token, from log-probabilities.
pub fn k3(logprob_policy: f64, logprob_ref: f64) -> f64 {
    let d = logprob_ref - logprob_policy;
    (d.exp_m1() - d).max(0.0)
}

/// Mean per-token k3 over the model-generated tokens.
pub fn masked_kl(traj: &ScoredTrajectory) -> Result<f64, GrpoError> {
    traj.validate()?;
    let total: f64 = traj
        .masked()
        .map(|i| k3(traj.token_logprobs_policy[i], traj.token_logprobs_ref[i]))
        .sum();
    Ok(total / traj.masked_count() as f64)
}

/// Group objective: mean surrogate minus `kl_coeff` times mean KL.
pub fn grpo_objective(group: &[ScoredTrajectory], cfg: &GrpoConfig) -> Result<f64, GrpoError> {
    let rewards: Vec<f64> = group.iter().map(|t| t.reward).collect();
    let advantages = group_advantages(&rewards, cfg)?;
    let g = group.len() as f64;
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    for (traj, adv) in group.iter().zip(&advantages) {
        surrogate += masked_surrogate(traj, *adv, cfg)?;
        kl += masked_kl(traj)?;
    }
    Ok(surrogate / g - cfg.kl_coeff * kl / g)
}

/// Outcome reward: 1 when the rollout answered and the verifier accepts.
pub fn reward(task: &dyn Task, instance: &TaskInstance, transcript: &Transcript) -> f64 {
    match (&transcript.termination, &transcript.final_answer) {
        (Termination::Answered, Some(answer)) if task.verify(instance, answer).correct => 1.0,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(policy: &[f64], old: &[f64], refp: &[f64], mask: &[u8], reward: f64) -> ScoredTrajectory {
        ScoredTrajectory {
            token_logprobs_policy: policy.to_vec(),
            token_logprobs_ref: refp.to_vec(),
            token_logprobs_old: old.to_vec(),
            mask: mask.to_vec(),
            reward,
        }
    }

    #[test]
    fn advantages_hand_oracle() {
        let cfg = GrpoConfig::default();
        assert_eq!(group_advantages(&[1.0; 5], &cfg).unwrap(), vec![0.0; 5]);
        let a = group_advantages(&[1.0, 0.0], &cfg.with_group_size(2)).unwrap();
        assert!((a[0] - 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
        assert!((a[1] + 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
        let a = group_advantages(&[1.0, 0.0, 0.0, 1.0, 0.0], &cfg).unwrap();
        let s = 0.24f64.sqrt() + 1e-8;
        for (got, r) in a.iter().zip([1.0, 0.0, 0.0, 1.0, 0.0]) {
            assert!((got - (r - 0.4) / s).abs() < 1e-9);
        }
        assert!(group_advantages(&[1.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn surrogate_hand_oracle() {
        let cfg = GrpoConfig::default();
        let t = traj(&[-1.0], &[-1.0], &[-1.0], &[1], 1.0);
        assert_eq!(masked_surrogate(&t, 2.0, &cfg).unwrap(), 2.0);
        let lp = 1.5f64.ln();
        let t = traj(&[-1.0 + lp], &[-1.0], &[-1.0], &[1], 1.0);
        assert!((masked_surrogate(&t, 1.0, &cfg).unwrap() - 1.2).abs() < 1e-12);
        let t = traj(&[-1.0 + lp, -0.1], &[-1.0, -30.0], &[-1.0, -9.0], &[1, 0], 1.0);
        assert!((masked_surrogate(&t, 1.0, &cfg).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn kl_hand_oracle() {
        let t = traj(&[-1.0, -2.0], &[-1.0, -2.0], &[-1.0, -2.0], &[1, 1], 0.0);
        assert_eq!(masked_kl(&t).unwrap(), 0.0);
        let t = traj(&[-1.0], &[-1.0], &[-1.5], &[1], 0.0);
        let want = (-0.5f64).exp() + 0.5 - 1.0;
        assert!((masked_kl(&t).unwrap() - want).abs() < 1e-12);
        let t = traj(&[-1.0, -0.001], &[-1.0, -0.001], &[-1.5, -50.0], &[1, 0], 0.0);
        assert!((masked_kl(&t).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn objective_compositions() {
        let cfg = GrpoConfig::default();
        let same = traj(&[-1.0, -2.0], &[-1.0, -2.0], &[-1.0, -2.0], &[1, 0], 1.0);
        assert_eq!(grpo_objective(&vec![same; 5], &cfg).unwrap(), 0.0);
        let cfg2 = GrpoConfig {
            group_size: 2,
            kl_coeff: 0.0,
            ..GrpoConfig::default()
        };
        let g = vec![
            traj(&[-1.0], &[-1.0], &[-1.0], &[1], 1.0),
            traj(&[-1.0], &[-1.0], &[-1.0], &[1], 0.0),
        ];
        assert!(grpo_objective(&g, &cfg2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn contract_errors() {
        let cfg = GrpoConfig::default();
        let t = traj(&[f64::NAN], &[-1.0], &[-1.0], &[1], 0.0);
        assert!(masked_surrogate(&t, 1.0, &cfg).is_err());
        let t = traj(&[-1.0], &[-1.0], &[-1.0], &[0], 0.0);
        assert!(masked_kl(&t).is_err());
        let t = traj(&[-1.0, -1.0], &[-1.0], &[-1.0], &[1], 0.0);
        assert!(t.validate().is_err());
        let t = traj(&[0.5], &[-1.0], &[-1.0], &[1], 0.0);
        assert!(t.validate().is_err());
    }
}
