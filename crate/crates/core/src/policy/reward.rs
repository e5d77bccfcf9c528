use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::EntityId;
use crate::nd::{ParamGrads, Tape, Var};

use super::beam::BeamEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardPhase {
    /// Binary reward for reaching the answer.
    Pretrain,
    /// `1 + p(e_I)` when the answer is reached, where `p` is the Stage-2
    /// score of the destination.
    Joint,
}

pub fn terminal_reward(
    destination: EntityId,
    answer: EntityId,
    stage2_score: Option<f64>,
    phase: RewardPhase,
) -> Result<f64> {
    let hit = destination == answer;
    match phase {
        RewardPhase::Pretrain => Ok(if hit { 1.0 } else { 0.0 }),
        RewardPhase::Joint => {
            let p = stage2_score.ok_or_else(|| Error::Invalid("joint-phase reward needs a Stage-2 score".into()))?;
            Ok(if hit { 1.0 + p } else { 0.0 })
        }
    }
}

/// Exponential moving average of the batch-mean reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub value: f64,
    pub decay: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Self { value: 0.0, decay: 0.9 }
    }
}

impl Baseline {
    /// `b ← decay·b + (1 − decay)·mean`.
    pub fn updated(self, batch_mean: f64) -> Self {
        Self {
            value: self.decay * self.value + (1.0 - self.decay) * batch_mean,
            ..self
        }
    }
}

/// Adds `−(R − b)/n · Σ_i log π(a_i)` for one rollout to `terms`.
pub fn push_surrogate_terms(
    terms: &mut Vec<(Var, f64)>,
    tape: &mut Tape<'_>,
    rollout: &BeamEntry,
    reward: f64,
    baseline: f64,
    n: usize,
) -> Result<()> {
    let w = -(reward - baseline) / n as f64;
    for &(node, col) in rollout.log_prob_nodes() {
        terms.push((tape.pick(node, 0, col)?, w));
    }
    Ok(())
}

/// REINFORCE surrogate `−(1/N) Σ_n (R_n − b) Σ_i log π(a_i^n)` over rollouts
/// that live on `tape`.
pub fn reinforce_surrogate(tape: &mut Tape<'_>, rollouts: &[(&BeamEntry, f64)], baseline: f64) -> Result<Var> {
    if rollouts.is_empty() {
        return Err(Error::Invalid("no rollouts for the policy gradient".into()));
    }
    let mut terms = Vec::new();
    for (entry, reward) in rollouts {
        push_surrogate_terms(&mut terms, tape, entry, *reward, baseline, rollouts.len())?;
    }
    if terms.is_empty() {
        return Ok(tape.constant(crate::nd::Tensor::scalar(0.0)));
    }
    tape.lin_comb(&terms)
}

/// Surrogate loss value, its parameter gradients and the baseline after
/// folding in this batch's mean reward.
pub fn reinforce_update(
    tape: &mut Tape<'_>,
    rollouts: &[(&BeamEntry, f64)],
    baseline: Baseline,
) -> Result<(f64, ParamGrads, Baseline)> {
    let loss = reinforce_surrogate(tape, rollouts, baseline.value)?;
    let grads = tape.backward(loss)?;
    let mean = rollouts.iter().map(|(_, r)| r).sum::<f64>() / rollouts.len() as f64;
    Ok((tape.value(loss).item(), grads, baseline.updated(mean)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewards() {
        use RewardPhase::*;
        assert_eq!(terminal_reward(3, 3, None, Pretrain).unwrap(), 1.0);
        assert_eq!(terminal_reward(2, 3, None, Pretrain).unwrap(), 0.0);
        assert_eq!(terminal_reward(3, 3, Some(0.25), Joint).unwrap(), 1.25);
        assert_eq!(terminal_reward(2, 3, Some(0.25), Joint).unwrap(), 0.0);
        assert!(terminal_reward(3, 3, None, Joint).is_err());
    }

    #[test]
    fn baseline_ema() {
        let b = Baseline::default().updated(1.0);
        assert!((b.value - 0.1).abs() < 1e-15);
        let b = b.updated(0.0);
        assert!((b.value - 0.09).abs() < 1e-15);
    }
}
