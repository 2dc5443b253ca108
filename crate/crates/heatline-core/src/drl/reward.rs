//! The three reward families scoring the temperature at the last controlled
//! zone sensor against a target.
//!
//! - symmetric: `1 - |T - T*| / band`, clipped to [-1, 1]
//! - asymmetric: overheating weighted by `over_weight` before the clip
//! - hyperbolic: `1 / (1 + |T - T*| / band)`, always in (0, 1]
//!
//! Episode scores sum the per-step rewards, except hyperbolic which averages
//! so the score stays in [0, 1].

use serde::{Deserialize, Serialize};

use super::DrlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    Symmetric,
    Asymmetric,
    Hyperbolic,
}

impl RewardFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            RewardFamily::Symmetric => "symmetric",
            RewardFamily::Asymmetric => "asymmetric",
            RewardFamily::Hyperbolic => "hyperbolic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric" => Some(RewardFamily::Symmetric),
            "asymmetric" => Some(RewardFamily::Asymmetric),
            "hyperbolic" => Some(RewardFamily::Hyperbolic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub family: RewardFamily,
    /// Target temperature, degC.
    pub target: f64,
    /// Error scale: the deviation that zeroes the symmetric reward, degC.
    pub half_band: f64,
    /// Extra weight on overheating; only used by the asymmetric family.
    pub over_weight: f64,
}

impl RewardSpec {
    pub fn symmetric(target: f64, half_band: f64) -> Self {
        RewardSpec { family: RewardFamily::Symmetric, target, half_band, over_weight: 1.0 }
    }

    pub fn asymmetric(target: f64, half_band: f64, over_weight: f64) -> Self {
        RewardSpec { family: RewardFamily::Asymmetric, target, half_band, over_weight }
    }

    pub fn hyperbolic(target: f64, half_band: f64) -> Self {
        RewardSpec { family: RewardFamily::Hyperbolic, target, half_band, over_weight: 1.0 }
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        if !(self.half_band > 0.0) {
            return Err(DrlError::InvalidConfig(format!(
                "reward half_band must be > 0, got {}",
                self.half_band
            )));
        }
        if self.family == RewardFamily::Asymmetric && !(self.over_weight > 1.0) {
            return Err(DrlError::InvalidConfig(format!(
                "asymmetric over_weight must be > 1, got {}",
                self.over_weight
            )));
        }
        Ok(())
    }

    /// Reward for one step given the last-sensor temperature.
    pub fn step_reward(&self, temp: f64) -> f64 {
        let err = (temp - self.target).abs() / self.half_band;
        match self.family {
            RewardFamily::Symmetric => (1.0 - err).clamp(-1.0, 1.0),
            RewardFamily::Asymmetric => {
                let weighted = if temp > self.target { err * self.over_weight } else { err };
                (1.0 - weighted).clamp(-1.0, 1.0)
            }
            RewardFamily::Hyperbolic => 1.0 / (1.0 + err),
        }
    }

    /// Episode score: mean for hyperbolic, sum otherwise.
    pub fn episode_score(&self, rewards: &[f64]) -> f64 {
        if rewards.is_empty() {
            return 0.0;
        }
        let sum: f64 = rewards.iter().sum();
        match self.family {
            RewardFamily::Hyperbolic => sum / rewards.len() as f64,
            _ => sum,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TARGET: f64 = 1207.5;
    const BAND: f64 = 67.5;

    #[test]
    fn on_target_all_families_give_one() {
        for spec in [
            RewardSpec::symmetric(TARGET, BAND),
            RewardSpec::asymmetric(TARGET, BAND, 2.0),
            RewardSpec::hyperbolic(TARGET, BAND),
        ] {
            assert_eq!(spec.step_reward(TARGET), 1.0);
        }
    }

    #[test]
    fn symmetric_definition_points() {
        let spec = RewardSpec::symmetric(TARGET, BAND);
        assert_eq!(spec.step_reward(TARGET + BAND), 0.0);
        assert_eq!(spec.step_reward(TARGET - BAND), 0.0);
        assert_eq!(spec.step_reward(TARGET + 2.0 * BAND), -1.0);
        assert_eq!(spec.step_reward(TARGET - 5.0 * BAND), -1.0);
    }

    #[test]
    fn asymmetric_weights_overheating_only() {
        let spec = RewardSpec::asymmetric(TARGET, BAND, 2.0);
        // Half a band above: 1 - 2 * 0.5 = 0.
        assert!((spec.step_reward(TARGET + BAND / 2.0)).abs() < 1e-12);
        // Half a band below: 1 - 0.5 = 0.5.
        assert!((spec.step_reward(TARGET - BAND / 2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_stays_in_unit_interval() {
        let spec = RewardSpec::hyperbolic(TARGET, BAND);
        for i in 0..=3000 {
            let t = i as f64 / 2.0;
            let r = spec.step_reward(t);
            assert!(r > 0.0 && r <= 1.0, "t={t} r={r}");
        }
    }

    #[test]
    fn episode_scores_aggregate_per_family() {
        let rewards = [0.5, 1.0, 0.25, 0.25];
        assert_eq!(RewardSpec::symmetric(TARGET, BAND).episode_score(&rewards), 2.0);
        assert_eq!(RewardSpec::hyperbolic(TARGET, BAND).episode_score(&rewards), 0.5);
        assert_eq!(RewardSpec::hyperbolic(TARGET, BAND).episode_score(&[]), 0.0);
    }

    #[test]
    fn asymmetric_requires_weight_above_one() {
        assert!(RewardSpec::asymmetric(TARGET, BAND, 1.0).validate().is_err());
        assert!(RewardSpec::asymmetric(TARGET, BAND, 2.0).validate().is_ok());
    }
}
