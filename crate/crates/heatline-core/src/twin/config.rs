//! Twin configuration: plant geometry, thermal constants, sensor placement.
//!
//! The default geometry encodes the 25 m line: 21 coils at a 1.25 m pitch
//! (nominally 1 m of coil plus a 0.25 m roller gap), zones 1-4 owning four
//! coils each and zone 5 five, because the last nominal coil is split into
//! two 0.5 m halves around an extra roller. 18 forge pyrometers sit in the
//! inter-coil gaps (2 in zone 1, 4 in each of zones 2-5); 15 virtual probe
//! positions are spread evenly across each zone span.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TwinError;
use crate::ZONE_COUNT;

pub const FORGE_SENSOR_COUNT: usize = 18;
pub const FORGE_SENSORS_PER_ZONE: [usize; ZONE_COUNT] = [2, 4, 4, 4, 4];
pub const VIRTUAL_SENSORS_PER_ZONE: usize = 15;

/// Zone-3 production band; fixed plant data, enforced at validation.
pub const ZONE3_BAND_MIN_C: f64 = 1140.0;
pub const ZONE3_BAND_MAX_C: f64 = 1275.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NormalProduction,
    Warmholding,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::NormalProduction => "normal_production",
            Mode::Warmholding => "warmholding",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "normal_production" => Some(Mode::NormalProduction),
            "warmholding" => Some(Mode::Warmholding),
            _ => None,
        }
    }
}

/// Which sensor family feeds readouts and agent observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    Forge,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilSpan {
    pub start_m: f64,
    pub end_m: f64,
    /// Zone index, 0-based.
    pub zone: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempBand {
    pub min: f64,
    pub target: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinConfig {
    /// Duration of one simulation step, seconds.
    pub step_seconds: f64,
    /// Default step budget for open-ended runs.
    pub total_steps: u64,
    /// Rod conveyor speed, m/s.
    pub rod_velocity: f64,
    /// Starting power per zone, kW.
    pub initial_powers: [f64; ZONE_COUNT],
    /// Starting voltage per zone, V. When absent, derived from the powers
    /// through the square-root relation around a 200 kW / 200 V reference.
    pub initial_voltages: Option<[f64; ZONE_COUNT]>,
    pub coil_layout: Vec<CoilSpan>,
    /// Forge pyrometer positions, m from the furnace inlet.
    pub sensor_positions_forge: Vec<f64>,
    /// Virtual probe positions per zone.
    pub sensor_positions_virtual: Vec<Vec<f64>>,
    pub ambient_temp: f64,
    /// Heating rate per kW for a segment under a powered coil, degC/(s*kW).
    pub heating_gain: f64,
    /// Newton cooling constant outside powered coils, 1/s.
    pub cooling_rate: f64,
    /// Rod discretization, m.
    pub segment_length: f64,
    pub zone_temp_bands: [TempBand; ZONE_COUNT],
    pub mode: Mode,
    /// Front-position bounds for the warmholding oscillation, m.
    pub warmhold_span: (f64, f64),
    /// Power moved by one Increase/Decrease action, kW.
    pub power_action_step: f64,
    /// (min, max) zone power, kW.
    pub power_bounds: (f64, f64),
    /// Length of the loading warehouse before the furnace inlet, m.
    pub warehouse_length: f64,
    pub material_id: String,
    /// Sensor family returned by `Twin::step`.
    pub readout_sensors: SensorMode,
}

impl Default for TwinConfig {
    fn default() -> Self {
        let coils = default_coil_layout();
        let forge = default_forge_positions(&coils);
        let virt = default_virtual_positions(&coils);
        TwinConfig {
            step_seconds: 1.0,
            total_steps: 1000,
            rod_velocity: 0.1,
            initial_powers: [300.0, 350.0, 200.0, 150.0, 100.0],
            initial_voltages: None,
            coil_layout: coils,
            sensor_positions_forge: forge,
            sensor_positions_virtual: virt,
            ambient_temp: 25.0,
            heating_gain: 0.01,
            cooling_rate: 0.005,
            segment_length: 0.05,
            zone_temp_bands: [
                TempBand { min: 600.0, target: 700.0, max: 800.0 },
                TempBand { min: 950.0, target: 1050.0, max: 1150.0 },
                TempBand { min: ZONE3_BAND_MIN_C, target: 1207.5, max: ZONE3_BAND_MAX_C },
                TempBand { min: 1150.0, target: 1210.0, max: 1270.0 },
                TempBand { min: 1150.0, target: 1200.0, max: 1250.0 },
            ],
            mode: Mode::NormalProduction,
            warmhold_span: (18.0, 24.0),
            power_action_step: 5.0,
            power_bounds: (0.0, 600.0),
            warehouse_length: 30.0,
            material_id: "steel-default".to_string(),
            readout_sensors: SensorMode::Forge,
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<(), TwinError> {
        let err = |msg: String| Err(TwinError::InvalidConfig(msg));
        if !(self.step_seconds > 0.0) {
            return err(format!("step_seconds must be > 0, got {}", self.step_seconds));
        }
        if !(self.segment_length > 0.0) {
            return err(format!("segment_length must be > 0, got {}", self.segment_length));
        }
        if self.power_bounds.0 < 0.0 || self.power_bounds.0 > self.power_bounds.1 {
            return err(format!(
                "power_bounds must satisfy 0 <= min <= max, got {:?}",
                self.power_bounds
            ));
        }
        if self.rod_velocity < 0.0 {
            return err(format!("rod_velocity must be >= 0, got {}", self.rod_velocity));
        }
        if self.power_action_step <= 0.0 {
            return err(format!(
                "power_action_step must be > 0, got {}",
                self.power_action_step
            ));
        }
        if self.heating_gain < 0.0 || self.cooling_rate < 0.0 {
            return err("heating_gain and cooling_rate must be >= 0".to_string());
        }
        // Explicit Euler cooling overshoots ambient beyond this bound.
        if self.cooling_rate * self.step_seconds > 1.0 {
            return err(format!(
                "cooling_rate * step_seconds must be <= 1 for a stable update, got {}",
                self.cooling_rate * self.step_seconds
            ));
        }
        if self.warmhold_span.0 >= self.warmhold_span.1 {
            return err(format!("warmhold_span must be ordered, got {:?}", self.warmhold_span));
        }
        self.validate_layout()?;
        self.validate_sensors()?;
        for (i, band) in self.zone_temp_bands.iter().enumerate() {
            if !(band.min <= band.target && band.target <= band.max) {
                return err(format!("zone {} band is not ordered: {:?}", i + 1, band));
            }
        }
        let z3 = &self.zone_temp_bands[2];
        if z3.min != ZONE3_BAND_MIN_C || z3.max != ZONE3_BAND_MAX_C {
            return err(format!(
                "zone 3 band is plant data and must stay ({}, {}), got ({}, {})",
                ZONE3_BAND_MIN_C, ZONE3_BAND_MAX_C, z3.min, z3.max
            ));
        }
        for p in self.initial_powers {
            if p < self.power_bounds.0 || p > self.power_bounds.1 {
                return err(format!("initial power {} kW outside {:?}", p, self.power_bounds));
            }
        }
        if let Some(vs) = self.initial_voltages {
            if vs.iter().any(|v| !(*v > 0.0)) {
                return err("initial voltages must be > 0".to_string());
            }
        }
        Ok(())
    }

    fn validate_layout(&self) -> Result<(), TwinError> {
        let err = |msg: String| Err(TwinError::InvalidConfig(msg));
        if self.coil_layout.len() != 21 {
            return err(format!("coil layout must have 21 coils, got {}", self.coil_layout.len()));
        }
        let mut per_zone = [0usize; ZONE_COUNT];
        let mut prev_end = f64::NEG_INFINITY;
        for coil in &self.coil_layout {
            if coil.zone >= ZONE_COUNT {
                return err(format!("coil zone {} out of range", coil.zone));
            }
            if !(coil.start_m < coil.end_m) {
                return err(format!("coil span not ordered: {:?}", coil));
            }
            if coil.start_m < prev_end {
                return err(format!("coil spans overlap near {:.2} m", coil.start_m));
            }
            prev_end = coil.end_m;
            per_zone[coil.zone] += 1;
        }
        if per_zone != [4, 4, 4, 4, 5] {
            return err(format!("coils per zone must be [4, 4, 4, 4, 5], got {:?}", per_zone));
        }
        Ok(())
    }

    fn validate_sensors(&self) -> Result<(), TwinError> {
        let err = |msg: String| Err(TwinError::InvalidConfig(msg));
        if self.sensor_positions_forge.len() != FORGE_SENSOR_COUNT {
            return err(format!(
                "expected {} forge sensors, got {}",
                FORGE_SENSOR_COUNT,
                self.sensor_positions_forge.len()
            ));
        }
        if self
            .sensor_positions_forge
            .windows(2)
            .any(|w| !(w[0] < w[1]))
        {
            return err("forge sensor positions must be strictly increasing".to_string());
        }
        if self.sensor_positions_virtual.len() != ZONE_COUNT {
            return err(format!(
                "expected {} virtual position lists, got {}",
                ZONE_COUNT,
                self.sensor_positions_virtual.len()
            ));
        }
        if self.sensor_positions_virtual.iter().any(|v| v.is_empty()) {
            return err("every zone needs at least one virtual position".to_string());
        }
        Ok(())
    }

    /// End of the heated line: the last coil's end, m.
    pub fn furnace_end(&self) -> f64 {
        self.coil_layout
            .iter()
            .map(|c| c.end_m)
            .fold(0.0, f64::max)
    }

    pub fn warehouse_start(&self) -> f64 {
        -self.warehouse_length
    }

    /// (start, end) extent of a zone's coils.
    pub fn zone_span(&self, zone: usize) -> (f64, f64) {
        let mut start = f64::INFINITY;
        let mut end = f64::NEG_INFINITY;
        for coil in self.coil_layout.iter().filter(|c| c.zone == zone) {
            start = start.min(coil.start_m);
            end = end.max(coil.end_m);
        }
        (start, end)
    }

    /// Forge-sensor index range owned by `zone` within the 18-vector.
    pub fn forge_index_range(zone: usize) -> (usize, usize) {
        let start: usize = FORGE_SENSORS_PER_ZONE[..zone].iter().sum();
        (start, start + FORGE_SENSORS_PER_ZONE[zone])
    }

    /// Forge sensor positions owned by `zone`.
    pub fn zone_forge_positions(&self, zone: usize) -> &[f64] {
        let (lo, hi) = Self::forge_index_range(zone);
        &self.sensor_positions_forge[lo..hi]
    }

    pub fn derived_initial_voltages(&self) -> [f64; ZONE_COUNT] {
        if let Some(vs) = self.initial_voltages {
            return vs;
        }
        let mut out = [0.0; ZONE_COUNT];
        for (i, p) in self.initial_powers.iter().enumerate() {
            // Induction power scales with V^2; anchor at 200 kW -> 200 V and
            // keep a 1 V floor so voltages stay positive at zero power.
            out[i] = (200.0 * (p / 200.0).sqrt()).ceil().max(1.0);
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TwinError> {
        let cfg: TwinConfig =
            toml::from_str(text).map_err(|e| TwinError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self, TwinError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TwinError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("twin config serializes")
    }
}

/// The stock 21-coil layout: 19 full 1 m coils at a 1.25 m pitch followed by
/// the split last coil, two 0.5 m halves with a roller gap between them.
pub fn default_coil_layout() -> Vec<CoilSpan> {
    let mut coils = Vec::with_capacity(21);
    for k in 0..19 {
        let start = k as f64 * 1.25;
        coils.push(CoilSpan { start_m: start, end_m: start + 1.0, zone: (k / 4).min(4) });
    }
    coils.push(CoilSpan { start_m: 23.75, end_m: 24.25, zone: 4 });
    coils.push(CoilSpan { start_m: 24.5, end_m: 25.0, zone: 4 });
    coils
}

/// One pyrometer per selected inter-coil gap, 2/4/4/4/4 across the zones:
/// each gap is attributed to the coil before it and zone 1 keeps only its
/// last two gaps.
pub fn default_forge_positions(coils: &[CoilSpan]) -> Vec<f64> {
    let mut per_zone: Vec<Vec<f64>> = vec![Vec::new(); ZONE_COUNT];
    for w in coils.windows(2) {
        per_zone[w[0].zone].push((w[0].end_m + w[1].start_m) / 2.0);
    }
    let mut out = Vec::with_capacity(FORGE_SENSOR_COUNT);
    for (zone, centers) in per_zone.iter().enumerate() {
        let keep = FORGE_SENSORS_PER_ZONE[zone];
        out.extend(centers.iter().copied().skip(centers.len().saturating_sub(keep)));
    }
    out
}

/// 15 evenly spaced probe positions spanning each zone's coil extent.
pub fn default_virtual_positions(coils: &[CoilSpan]) -> Vec<Vec<f64>> {
    (0..ZONE_COUNT)
        .map(|zone| {
            let mut start = f64::INFINITY;
            let mut end = f64::NEG_INFINITY;
            for c in coils.iter().filter(|c| c.zone == zone) {
                start = start.min(c.start_m);
                end = end.max(c.end_m);
            }
            let n = VIRTUAL_SENSORS_PER_ZONE;
            (0..n)
                .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
                .collect()
        })
        .collect()
}
