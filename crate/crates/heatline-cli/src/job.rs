//! Training job descriptions: TOML job files, scenario setup, grid files
//! and their cartesian expansion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use heatline_core::drl::{
    Agent, DqnAgent, DqnConfig, FurnaceEnv, FurnaceEnvConfig, PpoAgent, PpoConfig, RewardFamily,
    RewardSpec,
};
use heatline_core::power::NormBounds;
use heatline_core::twin::{zebra_init, Rod, SensorMode, TwinConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NormalProduction,
    AfterWarmholding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dqn,
    Ppo,
}

/// The `[env]` section: episode geometry and reward constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSection {
    pub episode_steps: u64,
    /// Controlled zone, 1-based as on the plant.
    pub zone: usize,
    pub rod_front_m: f64,
    pub rod_length_m: f64,
    pub rod_temp_c: f64,
    pub zebra_hot_c: f64,
    pub zebra_cold_c: f64,
    pub zebra_band_m: f64,
    pub reward_target_c: f64,
    pub reward_half_band_c: f64,
    pub reward_over_weight: f64,
    pub norm_temp: (f64, f64),
    pub norm_power: (f64, f64),
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            episode_steps: 450,
            zone: 3,
            rod_front_m: 25.0,
            rod_length_m: 55.0,
            rod_temp_c: 1150.0,
            zebra_hot_c: 1150.0,
            zebra_cold_c: 950.0,
            zebra_band_m: 1.0,
            reward_target_c: 1207.5,
            reward_half_band_c: 67.5,
            reward_over_weight: 2.0,
            norm_temp: (900.0, 1500.0),
            norm_power: (0.0, 600.0),
        }
    }
}

fn default_twin() -> TwinConfig {
    let mut twin = TwinConfig::default();
    twin.rod_velocity = 0.03;
    twin.segment_length = 0.25;
    twin.power_action_step = 50.0;
    twin.initial_powers = [150.0, 150.0, 150.0, 100.0, 100.0];
    twin
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobSpec {
    pub algorithm: Algorithm,
    pub reward: RewardFamily,
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default)]
    pub dqn: Option<DqnConfig>,
    #[serde(default)]
    pub ppo: Option<PpoConfig>,
    #[serde(default)]
    pub env: EnvSection,
    /// Twin overrides; defaults to the training-line preset.
    #[serde(default = "default_twin")]
    pub twin: TwinConfig,
}

impl JobSpec {
    pub fn from_toml_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let mut job: JobSpec =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("job file: {e}")))?;
        // The top-level seed is authoritative and lands in every output.
        match (&mut job.dqn, &mut job.ppo, job.algorithm) {
            (Some(cfg), _, Algorithm::Dqn) => cfg.common.seed = job.seed,
            (_, Some(cfg), Algorithm::Ppo) => cfg.common.seed = job.seed,
            (None, _, Algorithm::Dqn) => {
                return Err(CliError::Validation("algorithm dqn needs a [dqn] table".into()))
            }
            (_, None, Algorithm::Ppo) => {
                return Err(CliError::Validation("algorithm ppo needs a [ppo] table".into()))
            }
        }
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(1..=5).contains(&self.env.zone) {
            return Err(CliError::Validation(format!("zone {} out of range 1..=5", self.env.zone)));
        }
        self.twin.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        match self.algorithm {
            Algorithm::Dqn => self
                .dqn
                .as_ref()
                .expect("checked")
                .validate()
                .map_err(|e| CliError::Validation(e.to_string())),
            Algorithm::Ppo => self
                .ppo
                .as_ref()
                .expect("checked")
                .validate()
                .map_err(|e| CliError::Validation(e.to_string())),
        }
    }

    /// Enforce the sweep domains (grid mode).
    pub fn validate_grid(&self) -> Result<(), CliError> {
        match self.algorithm {
            Algorithm::Dqn => self
                .dqn
                .as_ref()
                .expect("checked")
                .validate_grid()
                .map_err(|e| CliError::Validation(e.to_string())),
            Algorithm::Ppo => self
                .ppo
                .as_ref()
                .expect("checked")
                .validate_grid()
                .map_err(|e| CliError::Validation(e.to_string())),
        }
    }

    pub fn episodes(&self) -> usize {
        match self.algorithm {
            Algorithm::Dqn => self.dqn.as_ref().expect("checked").common.episodes,
            Algorithm::Ppo => self.ppo.as_ref().expect("checked").common.episodes,
        }
    }

    pub fn sensors(&self) -> SensorMode {
        match self.algorithm {
            Algorithm::Dqn => self.dqn.as_ref().expect("checked").common.sensors,
            Algorithm::Ppo => self.ppo.as_ref().expect("checked").common.sensors,
        }
    }

    pub fn normalize(&self) -> bool {
        match self.algorithm {
            Algorithm::Dqn => self.dqn.as_ref().expect("checked").common.normalize,
            Algorithm::Ppo => self.ppo.as_ref().expect("checked").common.normalize,
        }
    }

    fn noise(&self) -> bool {
        match self.algorithm {
            Algorithm::Dqn => self.dqn.as_ref().expect("checked").common.noise_z1z2,
            Algorithm::Ppo => self.ppo.as_ref().expect("checked").common.noise_z1z2,
        }
    }

    pub fn reward_spec(&self) -> Result<RewardSpec, CliError> {
        let spec = match self.reward {
            RewardFamily::Symmetric => {
                RewardSpec::symmetric(self.env.reward_target_c, self.env.reward_half_band_c)
            }
            RewardFamily::Asymmetric => RewardSpec::asymmetric(
                self.env.reward_target_c,
                self.env.reward_half_band_c,
                self.env.reward_over_weight,
            ),
            RewardFamily::Hyperbolic => {
                RewardSpec::hyperbolic(self.env.reward_target_c, self.env.reward_half_band_c)
            }
        };
        spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(spec)
    }

    /// Build the training environment; the after-warmholding scenario paints
    /// the rod with zebra bands first.
    pub fn build_env_config(&self) -> Result<FurnaceEnvConfig, CliError> {
        let rod = Rod::new(
            "job-rod",
            self.env.rod_front_m,
            self.env.rod_length_m,
            self.twin.segment_length,
            self.env.rod_temp_c,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        let rod = match self.scenario {
            Scenario::NormalProduction => rod,
            Scenario::AfterWarmholding => {
                zebra_init(&rod, self.env.zebra_hot_c, self.env.zebra_cold_c, self.env.zebra_band_m)
                    .map_err(|e| CliError::Validation(e.to_string()))?
            }
        };
        Ok(FurnaceEnvConfig {
            twin: self.twin.clone(),
            rod,
            zone: self.env.zone - 1,
            sensors: self.sensors(),
            normalize: self.normalize(),
            noise_z1z2: self.noise(),
            episode_steps: self.env.episode_steps,
            reward: self.reward_spec()?,
            norm_bounds: NormBounds { temp: self.env.norm_temp, power: self.env.norm_power },
        })
    }

    pub fn build_env(&self) -> Result<FurnaceEnv, CliError> {
        FurnaceEnv::new(self.build_env_config()?, self.seed)
            .map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn build_agent(&self, observation_dim: usize) -> Agent {
        match self.algorithm {
            Algorithm::Dqn => {
                Agent::Dqn(DqnAgent::new(self.dqn.clone().expect("checked"), observation_dim, 3))
            }
            Algorithm::Ppo => {
                Agent::Ppo(PpoAgent::new(self.ppo.clone().expect("checked"), observation_dim, 3))
            }
        }
    }

    /// Hyperparameter echo in table form (printed before training).
    pub fn echo_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("algorithm".into(), format!("{:?}", self.algorithm).to_lowercase()),
            ("reward".into(), self.reward.as_str().to_string()),
            ("scenario".into(), format!("{:?}", self.scenario)),
            ("seed".into(), self.seed.to_string()),
        ];
        match self.algorithm {
            Algorithm::Dqn => {
                let c = self.dqn.as_ref().expect("checked");
                rows.extend([
                    ("episodes".into(), c.common.episodes.to_string()),
                    ("learning_rate".into(), c.common.learning_rate.to_string()),
                    ("batch_size".into(), c.common.batch_size.to_string()),
                    ("normalization".into(), c.common.normalize.to_string()),
                    ("z1z2_noise".into(), c.common.noise_z1z2.to_string()),
                    ("sensors".into(), format!("{:?}", c.common.sensors).to_lowercase()),
                    ("gamma".into(), c.gamma.to_string()),
                    ("epsilon_start".into(), c.epsilon_start.to_string()),
                    ("epsilon_min".into(), c.epsilon_min.to_string()),
                    ("epsilon_step".into(), c.epsilon_step.to_string()),
                    ("fc1_neurons".into(), c.fc1.to_string()),
                    ("fc2_neurons".into(), c.fc2.to_string()),
                    ("target_update_interval".into(), c.target_update_interval.to_string()),
                    ("transitions_memory".into(), c.memory_capacity.to_string()),
                ]);
            }
            Algorithm::Ppo => {
                let c = self.ppo.as_ref().expect("checked");
                rows.extend([
                    ("episodes".into(), c.common.episodes.to_string()),
                    ("learning_rate".into(), c.common.learning_rate.to_string()),
                    ("batch_size".into(), c.common.batch_size.to_string()),
                    ("normalization".into(), c.common.normalize.to_string()),
                    ("z1z2_noise".into(), c.common.noise_z1z2.to_string()),
                    ("sensors".into(), format!("{:?}", c.common.sensors).to_lowercase()),
                    ("lambda_gae".into(), c.lambda.to_string()),
                    ("c1_in_loss".into(), c.c1.to_string()),
                    ("c2_entropy".into(), c.c2.to_string()),
                    ("clip_epsilon".into(), c.clip_epsilon.to_string()),
                    ("epochs".into(), c.epochs.to_string()),
                    ("training_interval".into(), c.training_interval.to_string()),
                    ("actor_fc1".into(), c.actor_fc1.to_string()),
                    ("actor_fc2".into(), c.actor_fc2.to_string()),
                    ("critic_fc1".into(), c.critic_fc1.to_string()),
                    ("critic_fc2".into(), c.critic_fc2.to_string()),
                ]);
            }
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.into_iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

// --- grid files -------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
pub struct GridFile {
    pub algorithm: Algorithm,
    pub reward: RewardFamily,
    pub scenario: Scenario,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default = "default_twin")]
    pub twin: TwinConfig,
    pub common: CommonGrid,
    #[serde(default)]
    pub dqn: Option<DqnGrid>,
    #[serde(default)]
    pub ppo: Option<PpoGrid>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CommonGrid {
    pub episodes: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub seed: Vec<u64>,
    pub batch_size: Vec<usize>,
    pub normalize: Vec<bool>,
    pub noise_z1z2: Vec<bool>,
    pub sensors: Vec<SensorMode>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DqnGrid {
    pub gamma: Vec<f64>,
    pub epsilon_start: Vec<f64>,
    pub epsilon_min: Vec<f64>,
    pub epsilon_step: Vec<f64>,
    pub fc1: Vec<usize>,
    pub fc2: Vec<usize>,
    pub target_update_interval: Vec<u64>,
    pub memory_capacity: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PpoGrid {
    pub lambda: Vec<f64>,
    pub c1: Vec<f64>,
    pub clip_epsilon: Vec<f64>,
    pub epochs: Vec<usize>,
    pub training_interval: Vec<usize>,
    pub actor_fc1: Vec<usize>,
    pub actor_fc2: Vec<usize>,
    pub critic_fc1: Vec<usize>,
    pub critic_fc2: Vec<usize>,
}

impl GridFile {
    pub fn from_toml_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("grid file: {e}")))
    }

    /// Total cartesian-product size.
    pub fn product_size(&self) -> Result<usize, CliError> {
        let c = &self.common;
        let common: usize = [
            c.episodes.len(),
            c.learning_rate.len(),
            c.seed.len(),
            c.batch_size.len(),
            c.normalize.len(),
            c.noise_z1z2.len(),
            c.sensors.len(),
        ]
        .iter()
        .product();
        let algo: usize = match self.algorithm {
            Algorithm::Dqn => {
                let g = self.dqn.as_ref().ok_or_else(|| {
                    CliError::Validation("algorithm dqn needs a [dqn] grid".into())
                })?;
                [
                    g.gamma.len(),
                    g.epsilon_start.len(),
                    g.epsilon_min.len(),
                    g.epsilon_step.len(),
                    g.fc1.len(),
                    g.fc2.len(),
                    g.target_update_interval.len(),
                    g.memory_capacity.len(),
                ]
                .iter()
                .product()
            }
            Algorithm::Ppo => {
                let g = self.ppo.as_ref().ok_or_else(|| {
                    CliError::Validation("algorithm ppo needs a [ppo] grid".into())
                })?;
                [
                    g.lambda.len(),
                    g.c1.len(),
                    g.clip_epsilon.len(),
                    g.epochs.len(),
                    g.training_interval.len(),
                    g.actor_fc1.len(),
                    g.actor_fc2.len(),
                    g.critic_fc1.len(),
                    g.critic_fc2.len(),
                ]
                .iter()
                .product()
            }
        };
        let total = common * algo;
        if total == 0 {
            return Err(CliError::Validation("grid is empty".into()));
        }
        Ok(total)
    }

    /// The job at a given flat index of the cartesian product.
    pub fn job_at(&self, index: usize) -> JobSpec {
        let mut i = index;
        let mut pick = move |len: usize| -> usize {
            let k = i % len;
            i /= len;
            k
        };
        let c = &self.common;
        let common = heatline_core::drl::CommonConfig {
            episodes: c.episodes[pick(c.episodes.len())],
            learning_rate: c.learning_rate[pick(c.learning_rate.len())],
            seed: c.seed[pick(c.seed.len())],
            batch_size: c.batch_size[pick(c.batch_size.len())],
            normalize: c.normalize[pick(c.normalize.len())],
            noise_z1z2: c.noise_z1z2[pick(c.noise_z1z2.len())],
            sensors: c.sensors[pick(c.sensors.len())],
        };
        let (dqn, ppo) = match self.algorithm {
            Algorithm::Dqn => {
                let g = self.dqn.as_ref().expect("validated");
                let cfg = DqnConfig {
                    common: common.clone(),
                    gamma: g.gamma[pick(g.gamma.len())],
                    epsilon_start: g.epsilon_start[pick(g.epsilon_start.len())],
                    epsilon_min: g.epsilon_min[pick(g.epsilon_min.len())],
                    epsilon_step: g.epsilon_step[pick(g.epsilon_step.len())],
                    fc1: g.fc1[pick(g.fc1.len())],
                    fc2: g.fc2[pick(g.fc2.len())],
                    target_update_interval: g.target_update_interval
                        [pick(g.target_update_interval.len())],
                    memory_capacity: g.memory_capacity[pick(g.memory_capacity.len())],
                };
                (Some(cfg), None)
            }
            Algorithm::Ppo => {
                let g = self.ppo.as_ref().expect("validated");
                let cfg = PpoConfig {
                    common: common.clone(),
                    gamma: 0.99,
                    lambda: g.lambda[pick(g.lambda.len())],
                    c1: g.c1[pick(g.c1.len())],
                    c2: 0.01,
                    clip_epsilon: g.clip_epsilon[pick(g.clip_epsilon.len())],
                    epochs: g.epochs[pick(g.epochs.len())],
                    training_interval: g.training_interval[pick(g.training_interval.len())],
                    actor_fc1: g.actor_fc1[pick(g.actor_fc1.len())],
                    actor_fc2: g.actor_fc2[pick(g.actor_fc2.len())],
                    critic_fc1: g.critic_fc1[pick(g.critic_fc1.len())],
                    critic_fc2: g.critic_fc2[pick(g.critic_fc2.len())],
                };
                (None, Some(cfg))
            }
        };
        JobSpec {
            algorithm: self.algorithm,
            reward: self.reward,
            scenario: self.scenario,
            seed: common.seed,
            dqn,
            ppo,
            env: self.env.clone(),
            twin: self.twin.clone(),
        }
    }
}

/// `budget` distinct indices drawn uniformly without replacement from
/// `0..total` (Floyd's algorithm), deterministic in the seed.
pub fn sample_indices(total: usize, budget: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    use rand::SeedableRng;
    if budget >= total {
        return (0..total).collect();
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(budget);
    for j in (total - budget)..total {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    const JOB_TOML: &str = r#"
algorithm = "dqn"
reward = "hyperbolic"
scenario = "normal_production"
seed = 19

[dqn]
episodes = 50
learning_rate = 0.001
seed = 39
batch_size = 64
normalize = true
noise_z1z2 = false
sensors = "virtual"
gamma = 0.99
epsilon_start = 1.0
epsilon_min = 0.01
epsilon_step = 0.05
fc1 = 128
fc2 = 128
target_update_interval = 1000
memory_capacity = 100000
"#;

    #[test]
    fn job_parses_and_top_level_seed_wins() {
        let job = JobSpec::from_toml_str(JOB_TOML).unwrap();
        assert_eq!(job.seed, 19);
        assert_eq!(job.dqn.as_ref().unwrap().common.seed, 19);
        assert_eq!(job.episodes(), 50);
        job.validate_grid().unwrap();
    }

    #[test]
    fn after_warmholding_builds_zebra_rod() {
        let mut job = JobSpec::from_toml_str(JOB_TOML).unwrap();
        job.scenario = Scenario::AfterWarmholding;
        let cfg = job.build_env_config().unwrap();
        let (min, max) = cfg
            .rod
            .segment_temps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(*t), hi.max(*t)));
        assert_eq!(min, 950.0);
        assert_eq!(max, 1150.0);
    }

    #[test]
    fn out_of_domain_value_rejected_in_grid_mode() {
        let text = JOB_TOML.replace("learning_rate = 0.001", "learning_rate = 0.5");
        let job = JobSpec::from_toml_str(&text).unwrap();
        assert!(job.validate().is_ok());
        assert!(job.validate_grid().is_err());
    }

    #[test]
    fn grid_expansion_is_the_cartesian_product() {
        let grid = GridFile {
            algorithm: Algorithm::Dqn,
            reward: RewardFamily::Hyperbolic,
            scenario: Scenario::NormalProduction,
            env: EnvSection::default(),
            twin: default_twin(),
            common: CommonGrid {
                episodes: vec![50, 100],
                learning_rate: vec![0.001, 0.0001],
                seed: vec![19],
                batch_size: vec![64],
                normalize: vec![true],
                noise_z1z2: vec![false],
                sensors: vec![SensorMode::Virtual],
            },
            dqn: Some(DqnGrid {
                gamma: vec![0.9],
                epsilon_start: vec![1.0],
                epsilon_min: vec![0.01],
                epsilon_step: vec![0.05],
                fc1: vec![128],
                fc2: vec![128],
                target_update_interval: vec![1000],
                memory_capacity: vec![100000],
            }),
            ppo: None,
        };
        assert_eq!(grid.product_size().unwrap(), 4);
        let jobs: Vec<JobSpec> = (0..4).map(|i| grid.job_at(i)).collect();
        let mut combos: Vec<(usize, String)> = jobs
            .iter()
            .map(|j| {
                let c = &j.dqn.as_ref().unwrap().common;
                (c.episodes, c.learning_rate.to_string())
            })
            .collect();
        combos.sort();
        combos.dedup();
        assert_eq!(combos.len(), 4);
    }

    #[test]
    fn shipped_sample_configs_validate() {
        let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in [
            "job-dqn-normal-production.toml",
            "job-ppo-normal-production.toml",
            "job-dqn-after-warmholding.toml",
        ] {
            let job = JobSpec::from_toml_path(&configs.join(name)).unwrap();
            job.validate_grid().unwrap_or_else(|e| panic!("{name}: {e}"));
            job.build_env_config().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let grid = GridFile::from_toml_path(&configs.join("grid-dqn-small.toml")).unwrap();
        assert_eq!(grid.product_size().unwrap(), 8);
        for i in 0..8 {
            grid.job_at(i).validate_grid().unwrap();
        }
        TwinConfig::from_toml_path(&configs.join("twin.toml")).unwrap();
    }

    #[test]
    fn budget_sampling_is_seeded_and_distinct() {
        let a = sample_indices(100, 10, 7);
        let b = sample_indices(100, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 10);
        assert_ne!(a, sample_indices(100, 10, 8));
        assert_eq!(sample_indices(5, 10, 1), vec![0, 1, 2, 3, 4]);
    }
}
