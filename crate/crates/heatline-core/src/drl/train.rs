//! The training loop: episodes of act / step / store / train, metric
//! collection, and self-describing agent checkpoints.
//!
//! DQN trains every step once its memory holds a batch; PPO updates every
//! `training_interval` steps over the accumulated rollout, which may span
//! episode boundaries (masks carry the terminations).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::config::{DqnConfig, PpoConfig};
use super::dqn::{epsilon_schedule, DqnAgent};
use super::env::{Environment, FurnaceEnvConfig};
use super::mlp::Mlp;
use super::ppo::{PpoAgent, Rollout};
use super::replay::Transition;
use super::DrlError;

/// Metric sampling cadence for the temperature/power series.
pub const SERIES_SAMPLE_INTERVAL: u64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub score: f64,
    pub mean_loss: f64,
    pub mean_step_time_ms: f64,
    pub total_time_ms: f64,
    pub steps: u64,
    /// Last-sensor temperature sampled every 500 steps (step 0 included).
    pub zone_temp_series: Vec<f64>,
    /// Controlled-zone power on the same cadence.
    pub zone_power_series: Vec<f64>,
    /// Exploration rate for the episode (DQN only).
    pub epsilon: Option<f64>,
}

pub enum Agent {
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

impl Agent {
    pub fn kind(&self) -> &'static str {
        match self {
            Agent::Dqn(_) => "dqn",
            Agent::Ppo(_) => "ppo",
        }
    }

    pub fn greedy(&self, state: &[f64]) -> usize {
        match self {
            Agent::Dqn(a) => a.greedy(state),
            Agent::Ppo(a) => a.greedy(state),
        }
    }

    /// The network that gets deployed: the DQN online net or the PPO actor.
    pub fn policy_net(&self) -> &Mlp {
        match self {
            Agent::Dqn(a) => &a.online,
            Agent::Ppo(a) => &a.actor,
        }
    }
}

/// Run `episodes` episodes of training and collect the per-episode metrics.
pub fn drl_train<E: Environment>(
    env: &mut E,
    agent: &mut Agent,
    episodes: usize,
) -> Result<Vec<EpisodeMetrics>, DrlError> {
    let mut metrics = Vec::with_capacity(episodes);
    let mut rollout = Rollout::default();
    for episode in 0..episodes {
        let episode_start = Instant::now();
        let mut state = env.reset();
        let mut rewards: Vec<f64> = Vec::new();
        let mut losses: Vec<f64> = Vec::new();
        let mut temp_series = Vec::new();
        let mut power_series = Vec::new();
        let (t0, p0) = env.probe();
        temp_series.push(t0);
        power_series.push(p0);

        let epsilon = match agent {
            Agent::Dqn(a) => Some(epsilon_schedule(
                a.config.epsilon_start,
                a.config.epsilon_step,
                a.config.epsilon_min,
                episode as u64,
            )),
            Agent::Ppo(_) => None,
        };

        let mut steps: u64 = 0;
        loop {
            let outcome = match agent {
                Agent::Dqn(a) => {
                    let action = a.act(&state, epsilon.unwrap());
                    let outcome = env.step(action);
                    a.remember(Transition {
                        state: std::mem::take(&mut state),
                        action,
                        reward: outcome.reward,
                        next_state: outcome.state.clone(),
                        done: outcome.done,
                    });
                    if let Some(loss) = a.train_step() {
                        losses.push(loss);
                    }
                    outcome
                }
                Agent::Ppo(a) => {
                    let (action, log_prob) = a.act(&state);
                    let outcome = env.step(action);
                    let mask = if outcome.done { 0.0 } else { 1.0 };
                    rollout.push(
                        std::mem::take(&mut state),
                        action,
                        outcome.reward,
                        mask,
                        log_prob,
                        &outcome.state,
                    );
                    if rollout.len() >= a.config.training_interval {
                        let l = a.update(&rollout)?;
                        losses.push(l.value);
                        rollout.clear();
                    }
                    outcome
                }
            };
            steps += 1;
            rewards.push(outcome.reward);
            if steps % SERIES_SAMPLE_INTERVAL == 0 {
                let (t, p) = env.probe();
                temp_series.push(t);
                power_series.push(p);
            }
            state = outcome.state;
            if outcome.done {
                break;
            }
        }

        let total_ms = episode_start.elapsed().as_secs_f64() * 1e3;
        metrics.push(EpisodeMetrics {
            episode,
            score: env.episode_score(&rewards),
            mean_loss: mean(&losses),
            mean_step_time_ms: total_ms / steps.max(1) as f64,
            total_time_ms: total_ms,
            steps,
            zone_temp_series: temp_series,
            zone_power_series: power_series,
            epsilon,
        });
    }
    Ok(metrics)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One greedy evaluation episode; returns per-step (temperature, power).
pub fn evaluate_greedy<E: Environment>(env: &mut E, agent: &Agent) -> (f64, Vec<(f64, f64)>) {
    let mut state = env.reset();
    let mut rewards = Vec::new();
    let mut trace = Vec::new();
    loop {
        trace.push(env.probe());
        let action = agent.greedy(&state);
        let outcome = env.step(action);
        rewards.push(outcome.reward);
        state = outcome.state;
        if outcome.done {
            break;
        }
    }
    (env.episode_score(&rewards), trace)
}

// --- checkpoints -----------------------------------------------------------

const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetParams {
    pub dims: [usize; 4],
    pub params: Vec<f64>,
}

impl NetParams {
    pub fn of(net: &Mlp) -> Self {
        NetParams { dims: net.dims(), params: net.params_flat() }
    }

    pub fn build(&self) -> Result<Mlp, DrlError> {
        Mlp::from_flat(self.dims, &self.params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: String,
}

/// Self-describing agent checkpoint: config echo, flat parameter arrays and
/// the RNG position, enough to resume or deploy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub schema_version: u32,
    pub algorithm: String,
    pub dqn_config: Option<DqnConfig>,
    pub ppo_config: Option<PpoConfig>,
    pub nets: std::collections::BTreeMap<String, NetParams>,
    pub rng: RngState,
    /// Environment the agent was trained against, echoed for deployment
    /// (sensor geometry, normalization bounds, controlled zone).
    #[serde(default)]
    pub env: Option<FurnaceEnvConfig>,
}

impl AgentCheckpoint {
    pub fn capture(agent: &mut Agent) -> Self {
        let mut nets = std::collections::BTreeMap::new();
        let (algorithm, dqn_config, ppo_config, rng) = match agent {
            Agent::Dqn(a) => {
                nets.insert("online".to_string(), NetParams::of(&a.online));
                nets.insert("target".to_string(), NetParams::of(&a.target));
                let seed = a.config.common.seed;
                let pos = a.rng_mut().get_word_pos();
                ("dqn".to_string(), Some(a.config.clone()), None, RngState {
                    seed,
                    word_pos: pos.to_string(),
                })
            }
            Agent::Ppo(a) => {
                nets.insert("actor".to_string(), NetParams::of(&a.actor));
                nets.insert("critic".to_string(), NetParams::of(&a.critic));
                let seed = a.config.common.seed;
                let pos = a.rng_mut().get_word_pos();
                ("ppo".to_string(), None, Some(a.config.clone()), RngState {
                    seed,
                    word_pos: pos.to_string(),
                })
            }
        };
        AgentCheckpoint {
            schema_version: CHECKPOINT_SCHEMA,
            algorithm,
            dqn_config,
            ppo_config,
            nets,
            rng,
            env: None,
        }
    }

    pub fn with_env(mut self, env: FurnaceEnvConfig) -> Self {
        self.env = Some(env);
        self
    }

    pub fn restore(&self) -> Result<Agent, DrlError> {
        if self.schema_version != CHECKPOINT_SCHEMA {
            return Err(DrlError::BadCheckpoint(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        let net = |name: &str| -> Result<Mlp, DrlError> {
            self.nets
                .get(name)
                .ok_or_else(|| DrlError::BadCheckpoint(format!("missing net `{name}`")))?
                .build()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(self.rng.seed);
        let pos: u128 = self
            .rng
            .word_pos
            .parse()
            .map_err(|_| DrlError::BadCheckpoint("bad rng word position".to_string()))?;
        rng.set_word_pos(pos);
        match self.algorithm.as_str() {
            "dqn" => {
                let config = self
                    .dqn_config
                    .clone()
                    .ok_or_else(|| DrlError::BadCheckpoint("missing dqn config".to_string()))?;
                Ok(Agent::Dqn(DqnAgent::from_parts(config, net("online")?, net("target")?, rng)))
            }
            "ppo" => {
                let config = self
                    .ppo_config
                    .clone()
                    .ok_or_else(|| DrlError::BadCheckpoint("missing ppo config".to_string()))?;
                Ok(Agent::Ppo(PpoAgent::from_parts(config, net("actor")?, net("critic")?, rng)))
            }
            other => Err(DrlError::BadCheckpoint(format!("unknown algorithm `{other}`"))),
        }
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DrlError> {
        let text = serde_json::to_string(self)
            .map_err(|e| DrlError::BadCheckpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| DrlError::BadCheckpoint(e.to_string()))
    }

    pub fn load_json(path: &Path) -> Result<Self, DrlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DrlError::BadCheckpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| DrlError::BadCheckpoint(e.to_string()))
    }
}

/// Metrics CSV: one row per episode, series columns JSON-encoded.
pub fn write_metrics_csv(
    path: &Path,
    seed: u64,
    metrics: &[EpisodeMetrics],
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "episode,seed,score,mean_loss,mean_step_time_ms,total_time_ms,steps,epsilon,zone_temp_series,zone_power_series"
    )?;
    for m in metrics {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},\"{}\",\"{}\"",
            m.episode,
            seed,
            m.score,
            m.mean_loss,
            m.mean_step_time_ms,
            m.total_time_ms,
            m.steps,
            m.epsilon.map(|e| e.to_string()).unwrap_or_default(),
            serde_json::to_string(&m.zone_temp_series).unwrap(),
            serde_json::to_string(&m.zone_power_series).unwrap(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::env::StepOutcome;

    /// Tiny deterministic line-world: position drifts with the action, the
    /// reward peaks at the origin.
    struct LineEnv {
        position: f64,
        steps: u64,
        limit: u64,
    }

    impl LineEnv {
        fn new(limit: u64) -> Self {
            LineEnv { position: 2.0, steps: 0, limit }
        }
    }

    impl Environment for LineEnv {
        fn reset(&mut self) -> Vec<f64> {
            self.position = 2.0;
            self.steps = 0;
            vec![self.position, 1.0, 0.0]
        }

        fn step(&mut self, action: usize) -> StepOutcome {
            self.position += (action as f64) - 1.0;
            self.steps += 1;
            StepOutcome {
                state: vec![self.position, 1.0, 0.0],
                reward: 1.0 / (1.0 + self.position.abs()),
                done: self.steps >= self.limit,
            }
        }

        fn observation_dim(&self) -> usize {
            3
        }

        fn probe(&self) -> (f64, f64) {
            (self.position, 0.0)
        }
    }

    fn dqn_agent() -> Agent {
        let mut cfg = DqnConfig::default();
        cfg.common.batch_size = 8;
        cfg.common.episodes = 3;
        cfg.fc1 = 8;
        cfg.fc2 = 8;
        cfg.memory_capacity = 256;
        Agent::Dqn(DqnAgent::new(cfg, 3, 3))
    }

    #[test]
    fn one_episode_has_the_configured_step_count() {
        let mut env = LineEnv::new(12);
        let mut agent = dqn_agent();
        let metrics = drl_train(&mut env, &mut agent, 1).unwrap();
        assert_eq!(metrics.len(), 1);
        assert_eq!(metrics[0].steps, 12);
        assert_eq!(metrics[0].zone_temp_series.len(), 1); // floor(12/500) + 1
    }

    #[test]
    fn series_length_is_floor_steps_over_500_plus_one() {
        let mut env = LineEnv::new(1000);
        let mut agent = dqn_agent();
        let metrics = drl_train(&mut env, &mut agent, 1).unwrap();
        assert_eq!(metrics[0].zone_temp_series.len(), 3); // steps 0, 500, 1000
        assert_eq!(metrics[0].zone_power_series.len(), 3);
    }

    #[test]
    fn identical_seeds_reproduce_decision_metrics() {
        let run = || {
            let mut env = LineEnv::new(30);
            let mut agent = dqn_agent();
            drl_train(&mut env, &mut agent, 3).unwrap()
        };
        let (a, b) = (run(), run());
        let strip = |ms: &[EpisodeMetrics]| {
            ms.iter()
                .map(|m| (m.score, m.steps, m.epsilon, m.zone_temp_series.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn dqn_epsilon_series_matches_schedule() {
        let mut env = LineEnv::new(5);
        let mut agent = dqn_agent();
        let metrics = drl_train(&mut env, &mut agent, 4).unwrap();
        for (ep, m) in metrics.iter().enumerate() {
            let expected = epsilon_schedule(0.7, 0.05, 0.01, ep as u64);
            assert_eq!(m.epsilon, Some(expected));
        }
    }

    #[test]
    fn ppo_trains_on_interval_and_reports_losses() {
        let mut cfg = PpoConfig::default();
        cfg.common.learning_rate = 0.001;
        cfg.actor_fc1 = 8;
        cfg.actor_fc2 = 8;
        cfg.critic_fc1 = 8;
        cfg.critic_fc2 = 8;
        cfg.epochs = 2;
        cfg.training_interval = 16;
        let mut agent = Agent::Ppo(PpoAgent::new(cfg, 3, 3));
        let mut env = LineEnv::new(40);
        let metrics = drl_train(&mut env, &mut agent, 2).unwrap();
        // 80 steps total / interval 16 = 5 updates, spread over 2 episodes.
        let updates: usize = metrics.iter().map(|m| (m.mean_loss != 0.0) as usize).sum();
        assert!(updates >= 1);
    }

    #[test]
    fn checkpoint_round_trip_preserves_policy() {
        let mut env = LineEnv::new(20);
        let mut agent = dqn_agent();
        drl_train(&mut env, &mut agent, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        AgentCheckpoint::capture(&mut agent).save_json(&path).unwrap();
        let restored = AgentCheckpoint::load_json(&path).unwrap().restore().unwrap();
        let probe = [1.5, 1.0, 0.0];
        assert_eq!(agent.policy_net().forward(&probe), restored.policy_net().forward(&probe));
        match (&agent, &restored) {
            (Agent::Dqn(a), Agent::Dqn(b)) => assert_eq!(a.target, b.target),
            _ => panic!("algorithm changed in round trip"),
        }
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"schema_version\": 99}").unwrap();
        assert!(AgentCheckpoint::load_json(&path).is_err());
    }

    #[test]
    fn metrics_csv_has_one_row_per_episode() {
        let mut env = LineEnv::new(8);
        let mut agent = dqn_agent();
        let metrics = drl_train(&mut env, &mut agent, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&path, 19, &metrics).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("0,19,"));
    }
}
