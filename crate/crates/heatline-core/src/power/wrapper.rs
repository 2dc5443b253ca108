//! Deployment model wrapper: every exported agent presents the same
//! 23-feature input (18 forge temperatures then 5 zone powers) and 20-score
//! output (per zone, in order: increase, decrease, no change, drop).
//!
//! The wrapper selects the controlled zone's features, interpolates virtual
//! probe temperatures from the zone's forge knots when the agent was trained
//! on virtual sensors, normalizes when the agent expects it, runs the policy
//! network and scatters its three scores into the zone's output slot. Slots
//! of zones the model does not control are exactly zero.

use serde::{Deserialize, Serialize};

use super::PowerError;
use crate::drl::{argmax, Mlp};
use crate::twin::{PowerAction, SensorMode, TwinConfig, FORGE_SENSORS_PER_ZONE, FORGE_SENSOR_COUNT};
use crate::ZONE_COUNT;

pub const FEATURE_COUNT: usize = FORGE_SENSOR_COUNT + ZONE_COUNT; // 23
pub const SCORES_PER_ZONE: usize = 4;
pub const OUTPUT_SLOTS: usize = ZONE_COUNT * SCORES_PER_ZONE; // 20

const BUNDLE_SCHEMA: u32 = 1;

/// Min-max normalization bounds shared by training and deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub temp: (f64, f64),
    pub power: (f64, f64),
}

impl Default for NormBounds {
    fn default() -> Self {
        NormBounds { temp: (0.0, 1400.0), power: (0.0, 600.0) }
    }
}

impl NormBounds {
    pub fn normalize_temp(&self, t: f64) -> f64 {
        (t - self.temp.0) / (self.temp.1 - self.temp.0)
    }

    pub fn normalize_power(&self, p: f64) -> f64 {
        (p - self.power.0) / (self.power.1 - self.power.0)
    }
}

/// Piecewise-linear interpolation through the zone's forge knots, evaluated
/// at the virtual probe positions, clamped outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSpec {
    /// Knot positions (forge sensors of the zone), strictly increasing.
    pub forge_positions: Vec<f64>,
    /// Query positions (the zone's virtual probes).
    pub virtual_positions: Vec<f64>,
}

impl InterpolationSpec {
    pub fn eval_at(&self, forge_temps: &[f64], x: f64) -> f64 {
        let xs = &self.forge_positions;
        let ys = forge_temps;
        debug_assert_eq!(xs.len(), ys.len());
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[xs.len() - 1] {
            return ys[ys.len() - 1];
        }
        // Knot hits return the knot temperature exactly.
        for i in 0..xs.len() - 1 {
            if x == xs[i] {
                return ys[i];
            }
            if x > xs[i] && x < xs[i + 1] {
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                return ys[i] + t * (ys[i + 1] - ys[i]);
            }
        }
        ys[ys.len() - 1]
    }

    /// Temperatures at every virtual position.
    pub fn interpolate(&self, forge_temps: &[f64]) -> Vec<f64> {
        self.virtual_positions
            .iter()
            .map(|x| self.eval_at(forge_temps, *x))
            .collect()
    }
}

/// 0-based feature indices of a zone's temperatures within the 23-vector,
/// plus its power feature index.
pub fn zone_feature_indices(zone: usize) -> (std::ops::Range<usize>, usize) {
    let (lo, hi) = TwinConfig::forge_index_range(zone);
    (lo..hi, FORGE_SENSOR_COUNT + zone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrappedModel {
    pub schema_version: u32,
    /// 0-based controlled zone.
    pub zone: usize,
    pub sensor_mode: SensorMode,
    pub normalize: bool,
    pub norm_bounds: NormBounds,
    /// Present only for virtual-sensor models.
    pub interpolation: Option<InterpolationSpec>,
    pub policy: Mlp,
}

/// Wrap a trained policy network for deployment behind the unified
/// interface. The twin config supplies sensor geometry for virtual models.
pub fn wrap_model(
    policy: Mlp,
    zone: usize,
    sensor_mode: SensorMode,
    normalize: bool,
    norm_bounds: NormBounds,
    twin: &TwinConfig,
) -> Result<WrappedModel, PowerError> {
    if zone >= ZONE_COUNT {
        return Err(PowerError::Wrap(format!("zone {zone} out of range")));
    }
    if policy.output_dim() != 3 {
        return Err(PowerError::Wrap(format!(
            "policy must emit 3 action scores, got {}",
            policy.output_dim()
        )));
    }
    let interpolation = match sensor_mode {
        SensorMode::Forge => None,
        SensorMode::Virtual => Some(InterpolationSpec {
            forge_positions: twin.zone_forge_positions(zone).to_vec(),
            virtual_positions: twin.sensor_positions_virtual[zone].clone(),
        }),
    };
    let expected_inputs = match &interpolation {
        None => FORGE_SENSORS_PER_ZONE[zone] + 1,
        Some(spec) => spec.virtual_positions.len() + 1,
    };
    if policy.input_dim() != expected_inputs {
        return Err(PowerError::Wrap(format!(
            "policy expects {} inputs but the {:?}-sensor interface for zone {} has {}",
            policy.input_dim(),
            sensor_mode,
            zone + 1,
            expected_inputs
        )));
    }
    Ok(WrappedModel {
        schema_version: BUNDLE_SCHEMA,
        zone,
        sensor_mode,
        normalize,
        norm_bounds,
        interpolation,
        policy,
    })
}

impl WrappedModel {
    /// Translate the 23-feature vector into the policy's native input.
    pub fn native_input(&self, features: &[f64; FEATURE_COUNT]) -> Vec<f64> {
        let (temp_range, power_idx) = zone_feature_indices(self.zone);
        let zone_temps = &features[temp_range];
        let temps: Vec<f64> = match &self.interpolation {
            None => zone_temps.to_vec(),
            Some(spec) => spec.interpolate(zone_temps),
        };
        let mut input = Vec::with_capacity(temps.len() + 1);
        for t in temps {
            input.push(if self.normalize { self.norm_bounds.normalize_temp(t) } else { t });
        }
        let p = features[power_idx];
        input.push(if self.normalize { self.norm_bounds.normalize_power(p) } else { p });
        input
    }

    /// Raw policy scores for the controlled zone, native order
    /// (decrease, no change, increase).
    pub fn native_scores(&self, features: &[f64; FEATURE_COUNT]) -> Vec<f64> {
        self.policy.forward(&self.native_input(features))
    }

    /// The unified 20-score output: the controlled zone's slot carries the
    /// mapped raw scores with the unused drop slot at zero, every other
    /// zone's slot is all zeros.
    pub fn forward(&self, features: &[f64; FEATURE_COUNT]) -> [f64; OUTPUT_SLOTS] {
        let scores = self.native_scores(features);
        let mut out = [0.0; OUTPUT_SLOTS];
        let base = self.zone * SCORES_PER_ZONE;
        out[base] = scores[2]; // increase
        out[base + 1] = scores[0]; // decrease
        out[base + 2] = scores[1]; // no change
        // base + 3 (drop) stays zero: the native agents have no such action.
        out
    }

    /// Per-zone decision. Uncontrolled zones are no-change; the controlled
    /// zone's action is the argmax over the scores the agent actually
    /// produced, so the wrapped decision always equals the native one.
    pub fn decide(&self, features: &[f64; FEATURE_COUNT]) -> [PowerAction; ZONE_COUNT] {
        let mut actions = [PowerAction::NoChange; ZONE_COUNT];
        actions[self.zone] = match argmax(&self.native_scores(features)) {
            0 => PowerAction::Decrease,
            1 => PowerAction::NoChange,
            _ => PowerAction::Increase,
        };
        actions
    }

    pub fn to_bundle_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("wrapped model serializes")
    }

    pub fn from_bundle_json(bytes: &[u8]) -> Result<Self, PowerError> {
        let model: WrappedModel =
            serde_json::from_slice(bytes).map_err(|e| PowerError::BadBundle(e.to_string()))?;
        if model.schema_version != BUNDLE_SCHEMA {
            return Err(PowerError::BadBundle(format!(
                "unsupported bundle schema {}",
                model.schema_version
            )));
        }
        if !model.policy.is_finite() {
            return Err(PowerError::BadBundle("non-finite parameters".to_string()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn policy(inputs: usize, seed: u64) -> Mlp {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Mlp::new(inputs, 8, 8, 3, &mut rng)
    }

    fn features(seed: u64) -> [f64; FEATURE_COUNT] {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut f = [0.0; FEATURE_COUNT];
        for t in f.iter_mut().take(FORGE_SENSOR_COUNT) {
            *t = rand::Rng::random_range(&mut rng, 800.0..1300.0);
        }
        for p in f.iter_mut().skip(FORGE_SENSOR_COUNT) {
            *p = rand::Rng::random_range(&mut rng, 50.0..400.0);
        }
        f
    }

    #[test]
    fn zone3_features_are_seven_through_ten_and_twenty_one() {
        // 1-indexed: temperatures 7..=10 and power feature 21.
        let (temps, power) = zone_feature_indices(2);
        assert_eq!(temps, 6..10);
        assert_eq!(power, 20);
    }

    #[test]
    fn interpolation_is_exact_at_knots() {
        let spec = InterpolationSpec {
            forge_positions: vec![11.125, 12.375, 13.625, 14.875],
            virtual_positions: vec![10.0, 11.125, 12.0, 13.625, 14.875],
        };
        let temps = [1100.0, 1150.0, 1190.0, 1210.0];
        for (i, x) in spec.forge_positions.iter().enumerate() {
            assert_eq!(spec.eval_at(&temps, *x), temps[i]);
        }
    }

    #[test]
    fn interpolating_a_constant_is_constant() {
        let twin = TwinConfig::default();
        let spec = InterpolationSpec {
            forge_positions: twin.zone_forge_positions(2).to_vec(),
            virtual_positions: twin.sensor_positions_virtual[2].clone(),
        };
        let virtual_temps = spec.interpolate(&[1180.0; 4]);
        assert_eq!(virtual_temps.len(), 15);
        assert!(virtual_temps.iter().all(|t| *t == 1180.0));
    }

    #[test]
    fn clamped_extrapolation_holds_the_end_knots() {
        let spec = InterpolationSpec {
            forge_positions: vec![1.0, 2.0],
            virtual_positions: vec![0.0, 3.0],
        };
        assert_eq!(spec.interpolate(&[10.0, 20.0]), vec![10.0, 20.0]);
    }

    #[test]
    fn wrapper_equals_native_model_on_hand_built_inputs() {
        let twin = TwinConfig::default();
        let model = wrap_model(
            policy(16, 42),
            2,
            SensorMode::Virtual,
            true,
            NormBounds::default(),
            &twin,
        )
        .unwrap();
        for seed in 0..1000 {
            let x = features(seed);
            // Hand-assemble the native input from the declared contract.
            let knots = &x[6..10];
            let spec = model.interpolation.as_ref().unwrap();
            let mut native: Vec<f64> = spec
                .interpolate(knots)
                .into_iter()
                .map(|t| model.norm_bounds.normalize_temp(t))
                .collect();
            native.push(model.norm_bounds.normalize_power(x[20]));

            let native_action = argmax(&model.policy.forward(&native));
            let wrapped = model.decide(&x)[2];
            let expected = match native_action {
                0 => PowerAction::Decrease,
                1 => PowerAction::NoChange,
                _ => PowerAction::Increase,
            };
            assert_eq!(wrapped, expected, "seed {seed}");
        }
    }

    #[test]
    fn uncontrolled_zone_slots_are_exactly_zero() {
        let twin = TwinConfig::default();
        let model = wrap_model(
            policy(5, 7),
            3,
            SensorMode::Forge,
            true,
            NormBounds::default(),
            &twin,
        )
        .unwrap();
        for seed in 0..50 {
            let out = model.forward(&features(seed));
            for zone in 0..ZONE_COUNT {
                if zone == 3 {
                    assert_eq!(out[zone * 4 + 3], 0.0); // drop slot unused
                    continue;
                }
                for k in 0..SCORES_PER_ZONE {
                    assert_eq!(out[zone * 4 + k], 0.0);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_wrapping_error() {
        let twin = TwinConfig::default();
        let err = wrap_model(
            policy(7, 3),
            2,
            SensorMode::Virtual,
            true,
            NormBounds::default(),
            &twin,
        )
        .unwrap_err();
        assert!(matches!(err, PowerError::Wrap(_)));
    }

    #[test]
    fn zone1_forge_model_takes_two_temps() {
        let twin = TwinConfig::default();
        let model = wrap_model(
            policy(3, 5),
            0,
            SensorMode::Forge,
            false,
            NormBounds::default(),
            &twin,
        )
        .unwrap();
        let x = features(1);
        assert_eq!(model.native_input(&x), vec![x[0], x[1], x[18]]);
    }

    #[test]
    fn bundle_round_trip() {
        let twin = TwinConfig::default();
        let model = wrap_model(
            policy(16, 11),
            2,
            SensorMode::Virtual,
            true,
            NormBounds::default(),
            &twin,
        )
        .unwrap();
        let bytes = model.to_bundle_json();
        let back = WrappedModel::from_bundle_json(&bytes).unwrap();
        assert_eq!(model, back);
        assert!(WrappedModel::from_bundle_json(b"not json").is_err());
    }
}
