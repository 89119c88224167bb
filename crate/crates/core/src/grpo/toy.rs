//! A two-parameter softmax policy over three actions with a closed-form
//! gradient of the GRPO objective, for checking the objective wiring against
//! finite differences.

use super::{group_advantages, grpo_objective, GrpoConfig, GrpoError, ScoredTrajectory};

/// Log-probabilities of the three actions under logits `[t0, t1, 0]`.
pub fn log_probs(theta: [f64; 2]) -> [f64; 3] {
    let logits = [theta[0], theta[1], 0.0];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}

/// A group of one-action trajectories. Each trajectory also carries a fixed
/// execution token (mask 0) that the objective must ignore.
#[derive(Debug, Clone)]
pub struct ToyGroup {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub old_theta: [f64; 2],
    pub ref_theta: [f64; 2],
}

impl ToyGroup {
    pub fn trajectories(&self, theta: [f64; 2]) -> Vec<ScoredTrajectory> {
        let (p, o, r) = (log_probs(theta), log_probs(self.old_theta), log_probs(self.ref_theta));
        self.actions
            .iter()
            .zip(&self.rewards)
            .map(|(&a, &reward)| ScoredTrajectory {
                token_logprobs_policy: vec![p[a], -3.0],
                token_logprobs_ref: vec![r[a], -0.5],
                token_logprobs_old: vec![o[a], -7.0],
                mask: vec![1, 0],
                reward,
            })
            .collect()
    }

    pub fn config(&self, base: &GrpoConfig) -> GrpoConfig {
        base.with_group_size(self.actions.len())
    }

    pub fn objective(&self, theta: [f64; 2], cfg: &GrpoConfig) -> Result<f64, GrpoError> {
        grpo_objective(&self.trajectories(theta), &self.config(cfg))
    }

    /// Analytic gradient of [`Self::objective`] with respect to `theta`.
    pub fn gradient(&self, theta: [f64; 2], cfg: &GrpoConfig) -> Result<[f64; 2], GrpoError> {
        let cfg = self.config(cfg);
        let adv = group_advantages(&self.rewards, &cfg)?;
        let (p, o, r) = (log_probs(theta), log_probs(self.old_theta), log_probs(self.ref_theta));
        let probs = p.map(f64::exp);
        let g = self.actions.len() as f64;
        let mut grad = [0.0; 2];
        for (&a, &adv) in self.actions.iter().zip(&adv) {
            // d log pi(a) / d theta_k = [a == k] - pi_k
            let dlp = [f64::from(a == 0) - probs[0], f64::from(a == 1) - probs[1]];
            let ratio = (p[a] - o[a]).exp();
            // The unclipped branch is active unless the ratio sits past the
            // bound on the side the advantage pushes toward.
            let active = (adv > 0.0 && ratio < 1.0 + cfg.clip_eps) || (adv < 0.0 && ratio > 1.0 - cfg.clip_eps);
            let d_surr = if active { adv * ratio } else { 0.0 };
            // d k3 / d log pi = 1 - exp(ref - policy)
            let d_kl = 1.0 - (r[a] - p[a]).exp();
            for k in 0..2 {
                grad[k] += (d_surr - cfg.kl_coeff * d_kl) * dlp[k] / g;
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_probs_normalize() {
        let lp = log_probs([0.3, -1.2]);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((lp[2] - (-(1.0 + 0.3f64.exp() + (-1.2f64).exp()).ln())).abs() < 1e-12);
    }
}
