//! Training hyperparameters and the grid domains they may take when a job
//! is part of a systematic sweep. Free-form values are allowed outside grid
//! mode; `validate_grid` enforces the domains.

use serde::{Deserialize, Serialize};

use super::DrlError;
use crate::twin::SensorMode;

pub const EPISODES_VALUES: &[usize] = &[50, 100, 200, 300];
pub const LEARNING_RATE_VALUES: &[f64] = &[0.001, 0.0001, 0.00001];
pub const SEED_VALUES: &[u64] = &[19, 39];
pub const BATCH_SIZE_VALUES: &[usize] = &[64, 128, 256, 512, 1024, 2048, 4096];

pub const GAMMA_VALUES: &[f64] = &[0.9, 0.95, 0.98, 0.99];
pub const EPSILON_START_VALUES: &[f64] = &[0.7, 0.8, 0.9, 1.0];
pub const EPSILON_MIN_VALUES: &[f64] = &[0.01, 0.001, 0.0001, 0.00001];
pub const EPSILON_STEP_VALUES: &[f64] = &[0.05, 0.005, 0.0005, 0.00005];
pub const HIDDEN_NEURON_VALUES: &[usize] = &[128, 256, 512];
pub const TARGET_UPDATE_VALUES: &[u64] = &[1000, 10_000, 100_000];
pub const MEMORY_CAPACITY_VALUES: &[usize] = &[100_000, 200_000, 500_000];

pub const LAMBDA_VALUES: &[f64] = &[0.9, 0.95, 0.98, 0.99, 1.0];
pub const C1_VALUES: &[f64] = &[0.5, 1.0];
pub const CLIP_EPSILON_VALUES: &[f64] = &[0.1, 0.2, 0.3];
pub const EPOCHS_VALUES: &[usize] = &[5, 10, 15, 20, 25, 30];
pub const TRAINING_INTERVAL_VALUES: &[usize] =
    &[10, 25, 50, 100, 200, 500, 1000, 2000, 5000];

/// Hyperparameters shared by both algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Min-max normalize observations into [0, 1].
    pub normalize: bool,
    /// Apply multiplicative noise to zone 1-2 powers each step.
    pub noise_z1z2: bool,
    pub sensors: SensorMode,
}

impl Default for CommonConfig {
    fn default() -> Self {
        CommonConfig {
            episodes: 50,
            learning_rate: 0.001,
            seed: 19,
            batch_size: 64,
            normalize: true,
            noise_z1z2: false,
            sensors: SensorMode::Virtual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_step: f64,
    pub fc1: usize,
    pub fc2: usize,
    /// Gradient steps between target-network syncs.
    pub target_update_interval: u64,
    pub memory_capacity: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            common: CommonConfig::default(),
            gamma: 0.9,
            epsilon_start: 0.7,
            epsilon_min: 0.01,
            epsilon_step: 0.05,
            fc1: 128,
            fc2: 128,
            target_update_interval: 1000,
            memory_capacity: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    /// Discount factor; not part of the sweep grids.
    #[serde(default = "default_ppo_gamma")]
    pub gamma: f64,
    pub lambda: f64,
    pub c1: f64,
    /// Entropy bonus weight; not part of the sweep grids.
    #[serde(default = "default_c2")]
    pub c2: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub training_interval: usize,
    pub actor_fc1: usize,
    pub actor_fc2: usize,
    pub critic_fc1: usize,
    pub critic_fc2: usize,
}

fn default_c2() -> f64 {
    0.01
}

fn default_ppo_gamma() -> f64 {
    0.99
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            common: CommonConfig::default(),
            gamma: default_ppo_gamma(),
            lambda: 1.0,
            c1: 1.0,
            c2: default_c2(),
            clip_epsilon: 0.2,
            epochs: 20,
            training_interval: 100,
            actor_fc1: 256,
            actor_fc2: 512,
            critic_fc1: 256,
            critic_fc2: 256,
        }
    }
}

fn check<T: PartialEq + std::fmt::Debug>(
    field: &'static str,
    value: &T,
    domain: &[T],
) -> Result<(), DrlError> {
    if domain.contains(value) {
        Ok(())
    } else {
        Err(DrlError::OutsideGridDomain { field, value: format!("{value:?}") })
    }
}

impl CommonConfig {
    pub fn validate_grid(&self) -> Result<(), DrlError> {
        check("episodes", &self.episodes, EPISODES_VALUES)?;
        check("learning_rate", &self.learning_rate, LEARNING_RATE_VALUES)?;
        check("seed", &self.seed, SEED_VALUES)?;
        check("batch_size", &self.batch_size, BATCH_SIZE_VALUES)?;
        Ok(())
    }
}

impl DqnConfig {
    pub fn validate_grid(&self) -> Result<(), DrlError> {
        self.common.validate_grid()?;
        check("gamma", &self.gamma, GAMMA_VALUES)?;
        check("epsilon_start", &self.epsilon_start, EPSILON_START_VALUES)?;
        check("epsilon_min", &self.epsilon_min, EPSILON_MIN_VALUES)?;
        check("epsilon_step", &self.epsilon_step, EPSILON_STEP_VALUES)?;
        check("fc1", &self.fc1, HIDDEN_NEURON_VALUES)?;
        check("fc2", &self.fc2, HIDDEN_NEURON_VALUES)?;
        check("target_update_interval", &self.target_update_interval, TARGET_UPDATE_VALUES)?;
        check("memory_capacity", &self.memory_capacity, MEMORY_CAPACITY_VALUES)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        if self.epsilon_min > self.epsilon_start {
            return Err(DrlError::InvalidConfig(
                "epsilon_min must be <= epsilon_start".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DrlError::InvalidConfig(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if self.common.batch_size == 0 || self.memory_capacity == 0 {
            return Err(DrlError::InvalidConfig("batch size and memory must be > 0".to_string()));
        }
        if self.common.batch_size > self.memory_capacity {
            return Err(DrlError::InvalidConfig(
                "batch size cannot exceed memory capacity".to_string(),
            ));
        }
        Ok(())
    }
}

impl PpoConfig {
    pub fn validate_grid(&self) -> Result<(), DrlError> {
        self.common.validate_grid()?;
        check("lambda", &self.lambda, LAMBDA_VALUES)?;
        check("c1", &self.c1, C1_VALUES)?;
        check("clip_epsilon", &self.clip_epsilon, CLIP_EPSILON_VALUES)?;
        check("epochs", &self.epochs, EPOCHS_VALUES)?;
        check("training_interval", &self.training_interval, TRAINING_INTERVAL_VALUES)?;
        check("actor_fc1", &self.actor_fc1, HIDDEN_NEURON_VALUES)?;
        check("actor_fc2", &self.actor_fc2, HIDDEN_NEURON_VALUES)?;
        check("critic_fc1", &self.critic_fc1, HIDDEN_NEURON_VALUES)?;
        check("critic_fc2", &self.critic_fc2, HIDDEN_NEURON_VALUES)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        if !(self.clip_epsilon > 0.0) {
            return Err(DrlError::InvalidConfig("clip_epsilon must be > 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DrlError::InvalidConfig(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.epochs == 0 || self.training_interval == 0 {
            return Err(DrlError::InvalidConfig(
                "epochs and training_interval must be > 0".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DrlError::InvalidConfig(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The best proper-normal-production sweep configuration is in-domain.
    #[test]
    fn best_normal_production_config_is_accepted() {
        let cfg = PpoConfig {
            common: CommonConfig {
                episodes: 100,
                learning_rate: 0.001,
                seed: 19,
                batch_size: 4096,
                normalize: true,
                noise_z1z2: false,
                sensors: SensorMode::Virtual,
            },
            gamma: 0.99,
            lambda: 1.0,
            c1: 1.0,
            c2: 0.01,
            clip_epsilon: 0.2,
            epochs: 20,
            training_interval: 100,
            actor_fc1: 256,
            actor_fc2: 512,
            critic_fc1: 256,
            critic_fc2: 256,
        };
        cfg.validate().unwrap();
        cfg.validate_grid().unwrap();
    }

    /// The best after-warmholding sweep configuration is in-domain.
    #[test]
    fn best_after_warmholding_config_is_accepted() {
        let cfg = DqnConfig {
            common: CommonConfig {
                episodes: 300,
                learning_rate: 0.00001,
                seed: 19,
                batch_size: 1024,
                normalize: false,
                noise_z1z2: true,
                sensors: SensorMode::Virtual,
            },
            gamma: 0.9,
            epsilon_start: 0.7,
            epsilon_min: 0.01,
            epsilon_step: 0.05,
            fc1: 512,
            fc2: 256,
            target_update_interval: 100_000,
            memory_capacity: 100_000,
        };
        cfg.validate().unwrap();
        cfg.validate_grid().unwrap();
    }

    #[test]
    fn out_of_domain_learning_rate_rejected_in_grid_mode() {
        let mut cfg = DqnConfig::default();
        cfg.common.learning_rate = 0.5;
        cfg.validate().unwrap(); // fine in free mode
        let err = cfg.validate_grid().unwrap_err();
        assert!(matches!(err, DrlError::OutsideGridDomain { field: "learning_rate", .. }));
    }

    #[test]
    fn epsilon_floor_above_start_rejected() {
        let mut cfg = DqnConfig::default();
        cfg.epsilon_min = 0.9;
        cfg.epsilon_start = 0.7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip_with_flattened_common() {
        let cfg = PpoConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: PpoConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
