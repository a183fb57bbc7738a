use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::replay::{ReplayBuffer, Transition};
use super::AgentError;
use crate::plant::NUM_ACTIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Train steps between target-network syncs.
    pub target_update_freq: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of all training decisions over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Rewards are multiplied by this before entering Bellman targets.
    pub reward_scale: f64,
    /// Scaled rewards are clamped to `±reward_clip`, so the failure penalty
    /// cannot dwarf the per-step costs the policy has to tell apart.
    pub reward_clip: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            gamma: 0.95,
            target_update_freq: 100,
            batch_size: 16,
            replay_capacity: 5000,
            hidden_layers: vec![64, 64],
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.3,
            reward_scale: 0.2,
            reward_clip: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |key, reason: &str| {
            Err(AgentError::Hyperparam {
                key,
                reason: reason.to_string(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0,1)");
        }
        if self.target_update_freq == 0 {
            return bad("target_update_freq", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity", "must hold at least one batch");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden_layers", "widths must be positive");
        }
        for (key, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(key, "must lie in [0,1]");
            }
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        if !(self.reward_clip > 0.0) {
            return bad("reward_clip", "must be positive");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, obs_len: usize) -> Vec<usize> {
        let mut sizes = vec![obs_len];
        sizes.extend(&self.hidden_layers);
        sizes.push(NUM_ACTIONS);
        sizes
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Greedy with probability `1 − epsilon` (ties to the lowest index),
/// uniform otherwise.
pub fn select_action<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..values.len());
    }
    argmax(values)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn bellman_target(reward: f64, done: bool, gamma: f64, next_values: &[f64]) -> f64 {
    if done {
        return reward;
    }
    let best = next_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * best
}

/// Bellman targets for a batch, computed with the (frozen) target network.
fn batch_targets(target: &Mlp, batch: &[&Transition], hp: &Hyperparams) -> Result<Vec<f64>, AgentError> {
    batch
        .iter()
        .map(|t| {
            let next = target.forward(&t.next_obs)?;
            let r = (t.reward * hp.reward_scale).clamp(-hp.reward_clip, hp.reward_clip);
            Ok(bellman_target(r, t.done, hp.gamma, &next))
        })
        .collect()
}

/// Mean over the batch of `(Q(s)[a] − y)²`.
pub fn td_loss(policy: &Mlp, batch: &[&Transition], targets: &[f64]) -> Result<f64, AgentError> {
    let mut sum = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let q = policy.forward(&t.obs)?[t.action];
        sum += (q - y) * (q - y);
    }
    Ok(sum / batch.len() as f64)
}

/// Loss and its gradient with respect to every policy parameter; only the
/// taken action's output contributes per sample.
pub fn td_loss_gradients(
    policy: &Mlp,
    batch: &[&Transition],
    targets: &[f64],
    grads: &mut Mlp,
) -> Result<f64, AgentError> {
    grads.fill_zero();
    let n = batch.len() as f64;
    let mut acts = Vec::new();
    let mut d_out = vec![0.0; policy.output_dim()];
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        if t.obs.len() != policy.input_dim() {
            return Err(AgentError::Dimension {
                expected: policy.input_dim(),
                got: t.obs.len(),
            });
        }
        policy.forward_cached(&t.obs, &mut acts);
        let q = acts[acts.len() - 1][t.action];
        let err = q - y;
        loss += err * err;
        d_out.fill(0.0);
        d_out[t.action] = 2.0 * err / n;
        policy.backward(&acts, &d_out, grads);
    }
    Ok(loss / n)
}

/// One SGD step on the mean squared TD error. Returns the pre-update loss.
pub fn train_step(
    policy: &mut Mlp,
    target: &Mlp,
    batch: &[&Transition],
    hp: &Hyperparams,
) -> Result<f64, AgentError> {
    let mut grads = policy.zeros_like();
    train_step_with(policy, target, batch, hp, &mut grads, 0)
}

fn train_step_with(
    policy: &mut Mlp,
    target: &Mlp,
    batch: &[&Transition],
    hp: &Hyperparams,
    grads: &mut Mlp,
    step: u64,
) -> Result<f64, AgentError> {
    if batch.len() != hp.batch_size {
        return Err(AgentError::BatchSize {
            expected: hp.batch_size,
            got: batch.len(),
        });
    }
    let targets = batch_targets(target, batch, hp)?;
    let loss = td_loss_gradients(policy, batch, &targets, grads)?;
    if !loss.is_finite() {
        return Err(AgentError::Divergence { step, loss });
    }
    policy.descend(grads, hp.learning_rate);
    if !policy.all_finite() {
        return Err(AgentError::Divergence {
            step,
            loss: f64::NAN,
        });
    }
    Ok(loss)
}

/// Q-network, target network and replay buffer owned by one run.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    policy: Mlp,
    target: Mlp,
    replay: ReplayBuffer,
    grads: Mlp,
    hp: Hyperparams,
    epsilon: EpsilonSchedule,
    rng: ChaCha8Rng,
    decisions: u64,
    train_steps: u64,
    syncs: u64,
}

impl DqnAgent {
    /// `planned_decisions` sizes the epsilon decay window.
    pub fn new(
        obs_len: usize,
        hp: Hyperparams,
        seed: u64,
        planned_decisions: u64,
    ) -> Result<Self, AgentError> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Mlp::new(&hp.layer_sizes(obs_len), &mut rng)?;
        let target = policy.clone();
        let grads = policy.zeros_like();
        let epsilon = EpsilonSchedule {
            start: hp.epsilon_start,
            end: hp.epsilon_end,
            decay_steps: (planned_decisions as f64 * hp.epsilon_decay_fraction).round() as u64,
        };
        Ok(Self {
            policy,
            target,
            replay: ReplayBuffer::new(hp.replay_capacity),
            grads,
            hp,
            epsilon,
            rng,
            decisions: 0,
            train_steps: 0,
            syncs: 0,
        })
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.value(self.decisions)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.policy.forward(obs)
    }

    /// Exploring action; advances the epsilon schedule.
    pub fn act(&mut self, obs: &[f64]) -> Result<usize, AgentError> {
        let values = self.policy.forward(obs)?;
        let eps = self.epsilon.value(self.decisions);
        self.decisions += 1;
        Ok(select_action(&values, eps, &mut self.rng))
    }

    pub fn act_greedy(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.policy.forward(obs)?))
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    /// Samples a batch and takes one gradient step once the buffer holds a
    /// full batch. Syncs the target every `target_update_freq` steps.
    pub fn train(&mut self) -> Result<Option<f64>, AgentError> {
        if self.replay.len() < self.hp.batch_size {
            return Ok(None);
        }
        let items = self.replay.sample(self.hp.batch_size, &mut self.rng)?;
        let loss = train_step_with(
            &mut self.policy,
            &self.target,
            &items,
            &self.hp,
            &mut self.grads,
            self.train_steps,
        )?;
        self.train_steps += 1;
        if self.train_steps % self.hp.target_update_freq == 0 {
            self.sync_target();
        }
        Ok(Some(loss))
    }

    pub fn sync_target(&mut self) {
        self.target
            .copy_from(&self.policy)
            .expect("policy and target share a shape");
        self.syncs += 1;
    }
}
