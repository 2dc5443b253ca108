//! Environment contract binding agents to the furnace twin.
//!
//! One environment controls one zone's power with three actions (decrease,
//! no change, increase). Observations are the zone's sensor temperatures
//! plus its power, optionally min-max normalized; the reward scores the
//! temperature at the zone's last sensor.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::reward::RewardSpec;
use crate::power::NormBounds;
use crate::twin::{PowerAction, Rod, SensorMode, Twin, TwinConfig, TwinError, ZoneActions};
use crate::ZONE_COUNT;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> StepOutcome;
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize {
        3
    }
    /// (last-sensor temperature, controlled-zone power) for metrics.
    fn probe(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    /// Aggregate per-step rewards into an episode score.
    fn episode_score(&self, rewards: &[f64]) -> f64 {
        rewards.iter().sum()
    }
}

/// Uniform multiplicative noise half-width applied to zone 1-2 powers when
/// noise is enabled.
const Z12_NOISE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FurnaceEnvConfig {
    pub twin: TwinConfig,
    /// Rod placed at reset.
    pub rod: Rod,
    /// 0-based controlled zone.
    pub zone: usize,
    pub sensors: SensorMode,
    pub normalize: bool,
    pub noise_z1z2: bool,
    /// Steps per episode, fixed by the rod configuration.
    pub episode_steps: u64,
    pub reward: RewardSpec,
    pub norm_bounds: NormBounds,
}

impl FurnaceEnvConfig {
    /// Observation size: zone sensor count plus the zone power.
    pub fn observation_dim(&self) -> usize {
        match self.sensors {
            SensorMode::Forge => crate::twin::FORGE_SENSORS_PER_ZONE[self.zone] + 1,
            SensorMode::Virtual => self.twin.sensor_positions_virtual[self.zone].len() + 1,
        }
    }
}

pub struct FurnaceEnv {
    config: FurnaceEnvConfig,
    twin: Twin,
    steps: u64,
    rng: ChaCha12Rng,
    sensor_positions: Vec<f64>,
    last_sensor: f64,
}

impl FurnaceEnv {
    pub fn new(config: FurnaceEnvConfig, seed: u64) -> Result<Self, TwinError> {
        config.twin.validate()?;
        if config.zone >= ZONE_COUNT {
            return Err(TwinError::InvalidConfig(format!("zone {} out of range", config.zone)));
        }
        let sensor_positions: Vec<f64> = match config.sensors {
            SensorMode::Forge => config.twin.zone_forge_positions(config.zone).to_vec(),
            SensorMode::Virtual => config.twin.sensor_positions_virtual[config.zone].clone(),
        };
        let last_sensor = *sensor_positions.last().expect("zone has sensors");
        let twin = Twin::new(config.twin.clone(), vec![config.rod.clone()])?;
        Ok(FurnaceEnv {
            config,
            twin,
            steps: 0,
            // Decorrelate the env noise stream from the agent's stream.
            rng: ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            sensor_positions,
            last_sensor,
        })
    }

    pub fn config(&self) -> &FurnaceEnvConfig {
        &self.config
    }

    pub fn twin(&self) -> &Twin {
        &self.twin
    }

    pub fn last_sensor_temp(&self) -> f64 {
        self.twin.sense_at(&[self.last_sensor])[0]
    }

    pub fn zone_power(&self) -> f64 {
        self.twin.state().zone_powers[self.config.zone]
    }

    fn observe(&self) -> Vec<f64> {
        let temps = self.twin.sense_at(&self.sensor_positions);
        let mut obs = Vec::with_capacity(temps.len() + 1);
        let b = &self.config.norm_bounds;
        for t in temps {
            obs.push(if self.config.normalize { b.normalize_temp(t) } else { t });
        }
        let p = self.zone_power();
        obs.push(if self.config.normalize { b.normalize_power(p) } else { p });
        obs
    }
}

impl Environment for FurnaceEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.twin = Twin::new(self.config.twin.clone(), vec![self.config.rod.clone()])
            .expect("config validated at construction");
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let mut actions: ZoneActions = [PowerAction::NoChange; ZONE_COUNT];
        actions[self.config.zone] = match action {
            0 => PowerAction::Decrease,
            1 => PowerAction::NoChange,
            2 => PowerAction::Increase,
            other => panic!("action index {other} out of range"),
        };
        if self.config.noise_z1z2 {
            for zone in 0..2 {
                let factor =
                    1.0 + self.rng.random_range(-Z12_NOISE_FRACTION..=Z12_NOISE_FRACTION);
                let power = self.twin.state().zone_powers[zone] * factor;
                self.twin.set_zone_power(zone, power);
            }
        }
        self.twin.step(Some(&actions));
        self.steps += 1;
        let reward = self.config.reward.step_reward(self.last_sensor_temp());
        StepOutcome {
            state: self.observe(),
            reward,
            done: self.steps >= self.config.episode_steps,
        }
    }

    fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    fn probe(&self) -> (f64, f64) {
        (self.last_sensor_temp(), self.zone_power())
    }

    fn episode_score(&self, rewards: &[f64]) -> f64 {
        self.config.reward.episode_score(rewards)
    }
}
