//! Proximal policy optimization: actor-critic with the clipped surrogate
//! objective and generalized advantage estimation.
//!
//! The actor emits raw scores; a normalized exponential turns them into the
//! sampling distribution. Updates ascend the clipped objective plus an
//! entropy bonus on the actor and descend the weighted value error on the
//! critic, with the old-policy probabilities frozen for the whole update.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use super::config::PpoConfig;
use super::mlp::{AdamState, Mlp, MlpGradients};
use super::DrlError;

/// Floor on old-policy probabilities inside the ratio.
const PROB_FLOOR: f64 = 1e-8;

/// Generalized advantage estimation.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) * m_t - V(s_t)` and the backward
/// recursion `A_t = delta_t + gamma * lambda * m_t * A_{t+1}`, with the
/// accumulator zero past the last step. Masks are 1 while the episode
/// continues and 0 on the transition that ended it.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    masks: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, DrlError> {
    if rewards.len() != masks.len() || values.len() != rewards.len() + 1 {
        return Err(DrlError::DimensionMismatch {
            expected: rewards.len() + 1,
            got: values.len(),
        });
    }
    let mut advantages = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] * masks[t] - values[t];
        acc = delta + gamma * lambda * masks[t] * acc;
        advantages[t] = acc;
    }
    Ok(advantages)
}

/// Numerically stable normalized exponential.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// On-policy transitions accumulated between updates. May span episode
/// boundaries; masks carry the terminations.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub masks: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    /// Observation following the last stored transition (bootstrap state).
    pub final_state: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(
        &mut self,
        state: Vec<f64>,
        action: usize,
        reward: f64,
        mask: f64,
        log_prob: f64,
        next_state: &[f64],
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.rewards.push(reward);
        self.masks.push(mask);
        self.old_log_probs.push(log_prob);
        self.final_state = next_state.to_vec();
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.masks.clear();
        self.old_log_probs.clear();
        self.final_state.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLosses {
    /// Mean clipped surrogate objective across epochs.
    pub policy: f64,
    /// Mean value-function error across epochs.
    pub value: f64,
    /// Mean policy entropy across epochs.
    pub entropy: f64,
}

pub struct PpoAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub config: PpoConfig,
    rng: ChaCha12Rng,
    actor_adam: AdamState,
    critic_adam: AdamState,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, input_dim: usize, n_actions: usize) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(config.common.seed);
        let actor = Mlp::new(input_dim, config.actor_fc1, config.actor_fc2, n_actions, &mut rng);
        let critic = Mlp::new(input_dim, config.critic_fc1, config.critic_fc2, 1, &mut rng);
        let actor_adam = AdamState::new(&actor);
        let critic_adam = AdamState::new(&critic);
        PpoAgent { actor, critic, config, rng, actor_adam, critic_adam }
    }

    pub fn from_parts(config: PpoConfig, actor: Mlp, critic: Mlp, rng: ChaCha12Rng) -> Self {
        let actor_adam = AdamState::new(&actor);
        let critic_adam = AdamState::new(&critic);
        PpoAgent { actor, critic, config, rng, actor_adam, critic_adam }
    }

    pub fn n_actions(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    /// Sample an action from the policy distribution; returns the action and
    /// its log-probability under the current policy.
    pub fn act(&mut self, state: &[f64]) -> (usize, f64) {
        let probs = softmax(&self.actor.forward(state));
        let draw: f64 = self.rng.random();
        let mut cumulative = 0.0;
        let mut action = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                action = i;
                break;
            }
        }
        (action, probs[action].max(f64::MIN_POSITIVE).ln())
    }

    pub fn greedy(&self, state: &[f64]) -> usize {
        super::dqn::argmax(&self.actor.forward(state))
    }

    /// One PPO update over the whole rollout, `epochs` passes. Old-policy
    /// log-probabilities come frozen from the rollout.
    pub fn update(&mut self, rollout: &Rollout) -> Result<PpoLosses, DrlError> {
        if rollout.is_empty() {
            return Err(DrlError::EmptyRollout);
        }
        let gamma = self.config.gamma;
        // Values for s_0..s_T plus the bootstrap state.
        let mut values: Vec<f64> = rollout.states.iter().map(|s| self.critic.forward(s)[0]).collect();
        values.push(self.critic.forward(&rollout.final_state)[0]);
        let advantages = gae(&rollout.rewards, &values, &rollout.masks, gamma, self.config.lambda)?;
        let value_targets: Vec<f64> =
            advantages.iter().zip(&values).map(|(a, v)| a + v).collect();

        let mut policy_sum = 0.0;
        let mut value_sum = 0.0;
        let mut entropy_sum = 0.0;
        for _ in 0..self.config.epochs {
            let actor_pass = actor_loss_and_grads(
                &self.actor,
                rollout,
                &advantages,
                self.config.clip_epsilon,
                self.config.c2,
            );
            let critic_pass =
                critic_loss_and_grads(&self.critic, &rollout.states, &value_targets, self.config.c1);
            let lr = self.config.common.learning_rate;
            self.actor.adam_step(&mut self.actor_adam, &actor_pass.grads, lr);
            self.critic.adam_step(&mut self.critic_adam, &critic_pass.grads, lr);
            policy_sum += actor_pass.clip_objective;
            entropy_sum += actor_pass.entropy;
            value_sum += critic_pass.loss;
        }
        let epochs = self.config.epochs as f64;
        Ok(PpoLosses {
            policy: policy_sum / epochs,
            value: value_sum / epochs,
            entropy: entropy_sum / epochs,
        })
    }
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`, the per-sample objective.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
    unclipped.min(clipped)
}

#[derive(Debug)]
pub struct ActorPass {
    /// Mean clipped surrogate over the rollout.
    pub clip_objective: f64,
    /// Mean policy entropy.
    pub entropy: f64,
    /// Descent gradients of `-(clip_objective + c2 * entropy)`; applying
    /// them with `sgd_step` ascends the objective.
    pub grads: MlpGradients,
}

/// One full-rollout actor pass: objective, entropy and analytic gradients.
pub fn actor_loss_and_grads(
    actor: &Mlp,
    rollout: &Rollout,
    advantages: &[f64],
    clip_epsilon: f64,
    c2: f64,
) -> ActorPass {
    let n = rollout.len();
    let inv = 1.0 / n as f64;
    let mut grads = MlpGradients::zeros_like(actor);
    let mut objective = 0.0;
    let mut entropy_sum = 0.0;
    for t in 0..n {
        let state = &rollout.states[t];
        let action = rollout.actions[t];
        let advantage = advantages[t];

        let (logits, cache) = actor.forward_cached(state);
        let probs = softmax(&logits);
        let log_prob = probs[action].max(f64::MIN_POSITIVE).ln();
        let old_log_prob = rollout.old_log_probs[t].max(PROB_FLOOR.ln());
        let ratio = (log_prob - old_log_prob).exp();

        let unclipped = ratio * advantage;
        let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
        objective += unclipped.min(clipped) * inv;

        let entropy: f64 = probs
            .iter()
            .map(|p| if *p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum();
        entropy_sum += entropy * inv;

        // d min(r*A, clip(r)*A) / d r: the unclipped branch is active when
        // it is the smaller one; otherwise the gradient is zero.
        let surrogate_grad = if unclipped <= clipped { advantage } else { 0.0 };

        let mut upstream = vec![0.0; logits.len()];
        for j in 0..logits.len() {
            let indicator = if j == action { 1.0 } else { 0.0 };
            let dratio = ratio * (indicator - probs[j]);
            let dentropy = -probs[j] * (probs[j].max(f64::MIN_POSITIVE).ln() + entropy);
            upstream[j] = -(surrogate_grad * dratio + c2 * dentropy) * inv;
        }
        actor.backward_into(&cache, &upstream, &mut grads);
    }
    ActorPass { clip_objective: objective, entropy: entropy_sum, grads }
}

#[derive(Debug)]
pub struct CriticPass {
    /// Mean squared error against the value targets.
    pub loss: f64,
    /// Descent gradients of `c1 * loss`.
    pub grads: MlpGradients,
}

pub fn critic_loss_and_grads(
    critic: &Mlp,
    states: &[Vec<f64>],
    targets: &[f64],
    c1: f64,
) -> CriticPass {
    let n = states.len();
    let inv = 1.0 / n as f64;
    let mut grads = MlpGradients::zeros_like(critic);
    let mut loss = 0.0;
    for (state, target) in states.iter().zip(targets) {
        let (value, cache) = critic.forward_cached(state);
        let diff = value[0] - target;
        loss += diff * diff * inv;
        critic.backward_into(&cache, &[2.0 * diff * inv * c1], &mut grads);
    }
    CriticPass { loss, grads }
}
