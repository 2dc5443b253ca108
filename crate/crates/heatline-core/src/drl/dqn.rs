//! Deep Q-network agent: online and target networks, epsilon-greedy action
//! selection, replay sampling and the squared-error Bellman update.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::config::DqnConfig;
use super::mlp::{AdamState, Mlp, MlpGradients};
use super::replay::{ReplayMemory, Transition};

/// Linear epsilon decay over episodes with a floor:
/// `max(eps_min, eps_start - k * eps_step)`.
pub fn epsilon_schedule(eps_start: f64, eps_step: f64, eps_min: f64, episodes_elapsed: u64) -> f64 {
    (eps_start - episodes_elapsed as f64 * eps_step).max(eps_min)
}

/// Index of the largest entry, lowest index winning ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub memory: ReplayMemory,
    pub config: DqnConfig,
    rng: ChaCha12Rng,
    grad_steps: u64,
    grads: MlpGradients,
    adam: AdamState,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, input_dim: usize, n_actions: usize) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(config.common.seed);
        let online = Mlp::new(input_dim, config.fc1, config.fc2, n_actions, &mut rng);
        let target = online.clone();
        let memory = ReplayMemory::new(config.memory_capacity);
        let grads = MlpGradients::zeros_like(&online);
        let adam = AdamState::new(&online);
        DqnAgent { online, target, memory, config, rng, grad_steps: 0, grads, adam }
    }

    /// Restore an agent around known parameters (checkpoint load). The
    /// optimizer moments start fresh.
    pub fn from_parts(config: DqnConfig, online: Mlp, target: Mlp, rng: ChaCha12Rng) -> Self {
        let memory = ReplayMemory::new(config.memory_capacity);
        let grads = MlpGradients::zeros_like(&online);
        let adam = AdamState::new(&online);
        DqnAgent { online, target, memory, config, rng, grad_steps: 0, grads, adam }
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim()
    }

    /// Epsilon-greedy: explore uniformly with probability `epsilon`,
    /// otherwise take the greedy action.
    pub fn act(&mut self, state: &[f64], epsilon: f64) -> usize {
        if self.rng.random::<f64>() < epsilon {
            self.rng.random_range(0..self.n_actions())
        } else {
            self.greedy(state)
        }
    }

    pub fn greedy(&self, state: &[f64]) -> usize {
        argmax(&self.online.forward(state))
    }

    pub fn remember(&mut self, transition: Transition) {
        self.memory.push(transition);
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    /// One training step on a uniform batch from memory; `None` until the
    /// memory holds a full batch.
    pub fn train_step(&mut self) -> Option<f64> {
        let batch = self.config.common.batch_size;
        if self.memory.len() < batch {
            return None;
        }
        let indices = self.memory.sample_indices(&mut self.rng, batch);
        Some(self.train_on_indices(&indices))
    }

    /// Squared-error update against `y = r + (1 - done) * gamma * max_a
    /// Q_target(s', a)`, descending only through the taken action's output.
    /// The target network is copied from the online one every
    /// `target_update_interval` gradient steps.
    pub fn train_on_indices(&mut self, indices: &[usize]) -> f64 {
        self.grads.zero();
        let loss = batch_loss_into(
            &self.online,
            &self.target,
            &self.memory,
            self.config.gamma,
            indices,
            &mut self.grads,
        );
        self.online
            .adam_step(&mut self.adam, &self.grads, self.config.common.learning_rate);
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update_interval == 0 {
            self.target = self.online.clone();
        }
        loss
    }

    /// Loss and parameter gradients for a batch without stepping; the same
    /// path `train_on_indices` descends.
    pub fn loss_and_grads(&self, indices: &[usize]) -> (f64, MlpGradients) {
        let mut grads = MlpGradients::zeros_like(&self.online);
        let loss = batch_loss_into(
            &self.online,
            &self.target,
            &self.memory,
            self.config.gamma,
            indices,
            &mut grads,
        );
        (loss, grads)
    }
}

/// Mean squared Bellman error over the batch plus its gradients with respect
/// to the online network, accumulated into `grads`.
pub fn batch_loss_into(
    online: &Mlp,
    target: &Mlp,
    memory: &ReplayMemory,
    gamma: f64,
    indices: &[usize],
    grads: &mut MlpGradients,
) -> f64 {
    let batch = indices.len();
    assert!(batch > 0);
    let inv = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut upstream = vec![0.0; online.output_dim()];
    for &i in indices {
        let t = memory.get(i);
        let (q, cache) = online.forward_cached(&t.state);
        let target_value = if t.done {
            t.reward
        } else {
            let next_q = target.forward(&t.next_state);
            t.reward + gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let diff = q[t.action] - target_value;
        loss += diff * diff * inv;
        upstream.fill(0.0);
        upstream[t.action] = 2.0 * diff * inv;
        online.backward_into(&cache, &upstream, grads);
    }
    loss
}
