//! From-scratch deep reinforcement learning: MLP, DQN, PPO, rewards, the
//! environment contract and the training loop.

mod config;
mod dqn;
mod env;
mod mlp;
mod ppo;
mod replay;
mod reward;
mod train;

pub use config::{
    CommonConfig, DqnConfig, PpoConfig, BATCH_SIZE_VALUES, C1_VALUES, CLIP_EPSILON_VALUES,
    EPISODES_VALUES, EPOCHS_VALUES, EPSILON_MIN_VALUES, EPSILON_START_VALUES, EPSILON_STEP_VALUES,
    GAMMA_VALUES, HIDDEN_NEURON_VALUES, LAMBDA_VALUES, LEARNING_RATE_VALUES,
    MEMORY_CAPACITY_VALUES, SEED_VALUES, TARGET_UPDATE_VALUES, TRAINING_INTERVAL_VALUES,
};
pub use dqn::{argmax, batch_loss_into, epsilon_schedule, DqnAgent};
pub use env::{Environment, FurnaceEnv, FurnaceEnvConfig, StepOutcome};
pub use mlp::{AdamState, ForwardCache, Mlp, MlpGradients};
pub use ppo::{
    actor_loss_and_grads, clipped_surrogate, critic_loss_and_grads, gae, softmax, ActorPass,
    CriticPass, PpoAgent, PpoLosses, Rollout,
};
pub use replay::{ReplayMemory, Transition};
pub use reward::{RewardFamily, RewardSpec};
pub use train::{
    drl_train, evaluate_greedy, write_metrics_csv, Agent, AgentCheckpoint, EpisodeMetrics,
    NetParams, RngState, SERIES_SAMPLE_INTERVAL,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("`{field}` value {value} is outside its sweep domain")]
    OutsideGridDomain { field: &'static str, value: String },
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("environment failed: {0}")]
    EnvFailure(String),
}
