//! Raw telemetry payloads and their reformatted typed records.
//!
//! Raw messages are gateway-style JSON objects:
//! `{"schema_version": 1, "tag": "T_Z3_2", "value": 1180.5, "ts": <ns>}`.
//! The tag map resolves plant tag names to record kinds and sensor indices:
//! `T_Z<zone>_<i>` temperatures, `P_Z<zone>` powers, `ROD_POS`, `ROD_VEL`,
//! `MODE`, `MATERIAL`.

use serde::{Deserialize, Serialize};

use crate::twin::{Mode, FORGE_SENSORS_PER_ZONE};
use crate::ZONE_COUNT;

pub const RAW_SCHEMA_VERSION: u32 = 1;

pub const TAG_MODE: &str = "MODE";
pub const TAG_MATERIAL: &str = "MATERIAL";
pub const TAG_ROD_POS: &str = "ROD_POS";
pub const TAG_ROD_VEL: &str = "ROD_VEL";

pub fn temperature_tag(zone: usize, index_in_zone: usize) -> String {
    format!("T_Z{}_{}", zone + 1, index_in_zone + 1)
}

pub fn power_tag(zone: usize) -> String {
    format!("P_Z{}", zone + 1)
}

pub fn voltage_tag(zone: usize) -> String {
    format!("V_Z{}", zone + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTelemetry {
    pub schema_version: u32,
    pub tag: String,
    pub value: serde_json::Value,
    /// Nanoseconds since the epoch.
    pub ts: u64,
}

impl RawTelemetry {
    pub fn number(tag: impl Into<String>, value: f64, ts: u64) -> Self {
        RawTelemetry {
            schema_version: RAW_SCHEMA_VERSION,
            tag: tag.into(),
            value: serde_json::json!(value),
            ts,
        }
    }

    pub fn text(tag: impl Into<String>, value: &str, ts: u64) -> Self {
        RawTelemetry {
            schema_version: RAW_SCHEMA_VERSION,
            tag: tag.into(),
            value: serde_json::json!(value),
            ts,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("raw telemetry serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Temperature,
    Position,
    Velocity,
    Power,
    Mode,
    Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum RecordValue {
    /// degC for temperatures, kW for powers, m / m/s for kinematics.
    Number(f64),
    Text(String),
    Mode(Mode),
}

impl RecordValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            RecordValue::Number(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub source_tag: String,
    pub kind: RecordKind,
    pub value: RecordValue,
    pub timestamp_ns: u64,
    /// Global forge-sensor index for temperatures, zone index for powers.
    pub sensor_index: Option<usize>,
}

impl TelemetryRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("telemetry record serializes")
    }

    pub fn snapshot_second(&self) -> u64 {
        self.timestamp_ns / crate::clock::NS_PER_SEC
    }
}

/// Why a raw message was quarantined instead of reformatted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseRejection {
    pub reason: String,
}

impl ParseRejection {
    fn new(reason: impl Into<String>) -> Self {
        ParseRejection { reason: reason.into() }
    }
}

/// Parse and reformat one raw payload into a typed record.
pub fn parse(payload: &[u8]) -> Result<TelemetryRecord, ParseRejection> {
    let raw: RawTelemetry = serde_json::from_slice(payload)
        .map_err(|e| ParseRejection::new(format!("malformed json: {e}")))?;
    if raw.schema_version != RAW_SCHEMA_VERSION {
        return Err(ParseRejection::new(format!(
            "unsupported schema version {}",
            raw.schema_version
        )));
    }
    let number = |what: &str| -> Result<f64, ParseRejection> {
        raw.value
            .as_f64()
            .ok_or_else(|| ParseRejection::new(format!("type mismatch: {what} needs a number")))
    };
    let text = |what: &str| -> Result<String, ParseRejection> {
        raw.value
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ParseRejection::new(format!("type mismatch: {what} needs a string")))
    };

    let (kind, value, sensor_index) = if let Some(rest) = raw.tag.strip_prefix("T_Z") {
        let index = parse_temperature_index(rest)
            .ok_or_else(|| ParseRejection::new(format!("unknown tag `{}`", raw.tag)))?;
        let v = number("temperature")?;
        if !v.is_finite() {
            return Err(ParseRejection::new("non-finite temperature"));
        }
        (RecordKind::Temperature, RecordValue::Number(v), Some(index))
    } else if let Some(rest) = raw.tag.strip_prefix("P_Z") {
        let zone: usize = rest
            .parse::<usize>()
            .ok()
            .filter(|z| (1..=ZONE_COUNT).contains(z))
            .ok_or_else(|| ParseRejection::new(format!("unknown tag `{}`", raw.tag)))?;
        let v = number("power")?;
        if !v.is_finite() {
            return Err(ParseRejection::new("non-finite power"));
        }
        if v < 0.0 {
            return Err(ParseRejection::new("negative power"));
        }
        (RecordKind::Power, RecordValue::Number(v), Some(zone - 1))
    } else {
        match raw.tag.as_str() {
            TAG_ROD_POS => (RecordKind::Position, RecordValue::Number(number("position")?), None),
            TAG_ROD_VEL => (RecordKind::Velocity, RecordValue::Number(number("velocity")?), None),
            TAG_MODE => {
                let s = text("mode")?;
                let mode = Mode::parse(&s)
                    .ok_or_else(|| ParseRejection::new(format!("unknown mode `{s}`")))?;
                (RecordKind::Mode, RecordValue::Mode(mode), None)
            }
            TAG_MATERIAL => (RecordKind::Material, RecordValue::Text(text("material")?), None),
            other => return Err(ParseRejection::new(format!("unknown tag `{other}`"))),
        }
    };
    Ok(TelemetryRecord {
        source_tag: raw.tag,
        kind,
        value,
        timestamp_ns: raw.ts,
        sensor_index,
    })
}

/// `"<zone>_<i>"` -> global forge index.
fn parse_temperature_index(rest: &str) -> Option<usize> {
    let (zone_s, idx_s) = rest.split_once('_')?;
    let zone: usize = zone_s.parse().ok()?;
    let idx: usize = idx_s.parse().ok()?;
    if !(1..=ZONE_COUNT).contains(&zone) {
        return None;
    }
    if !(1..=FORGE_SENSORS_PER_ZONE[zone - 1]).contains(&idx) {
        return None;
    }
    let base: usize = FORGE_SENSORS_PER_ZONE[..zone - 1].iter().sum();
    Some(base + idx - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_tag_resolves_sensor_index() {
        let raw = RawTelemetry::number("T_Z3_2", 1180.5, 77);
        let rec = parse(&raw.to_bytes()).unwrap();
        assert_eq!(rec.kind, RecordKind::Temperature);
        assert_eq!(rec.value, RecordValue::Number(1180.5));
        // Zone 1 holds sensors 0..2, zone 2 holds 2..6, zone 3 starts at 6.
        assert_eq!(rec.sensor_index, Some(7));
        assert_eq!(rec.timestamp_ns, 77);
    }

    #[test]
    fn string_temperature_is_a_type_mismatch() {
        let raw = RawTelemetry::text("T_Z3_2", "hot", 1);
        let err = parse(&raw.to_bytes()).unwrap_err();
        assert!(err.reason.contains("type mismatch"));
    }

    #[test]
    fn malformed_json_is_quarantined() {
        let err = parse(b"{{{").unwrap_err();
        assert!(err.reason.contains("malformed json"));
    }

    #[test]
    fn unknown_tags_and_out_of_range_sensors_rejected() {
        assert!(parse(&RawTelemetry::number("X_Q1", 1.0, 1).to_bytes()).is_err());
        assert!(parse(&RawTelemetry::number("T_Z1_3", 1.0, 1).to_bytes()).is_err()); // zone 1 has 2
        assert!(parse(&RawTelemetry::number("T_Z6_1", 1.0, 1).to_bytes()).is_err());
        assert!(parse(&RawTelemetry::number("P_Z0", 1.0, 1).to_bytes()).is_err());
    }

    #[test]
    fn power_must_be_finite_and_non_negative() {
        assert!(parse(&RawTelemetry::number("P_Z2", -3.0, 1).to_bytes()).is_err());
        assert!(parse(&RawTelemetry::number("P_Z2", f64::NAN, 1).to_bytes()).is_err());
        let rec = parse(&RawTelemetry::number("P_Z2", 240.0, 1).to_bytes()).unwrap();
        assert_eq!(rec.sensor_index, Some(1));
    }

    #[test]
    fn mode_and_material_records() {
        let rec = parse(&RawTelemetry::text(TAG_MODE, "warmholding", 5).to_bytes()).unwrap();
        assert_eq!(rec.value, RecordValue::Mode(Mode::Warmholding));
        let rec = parse(&RawTelemetry::text(TAG_MATERIAL, "steel-42", 5).to_bytes()).unwrap();
        assert_eq!(rec.value, RecordValue::Text("steel-42".to_string()));
        assert!(parse(&RawTelemetry::text(TAG_MODE, "off", 5).to_bytes()).is_err());
    }

    #[test]
    fn unsupported_schema_version_rejected() {
        let mut raw = RawTelemetry::number("T_Z1_1", 500.0, 1);
        raw.schema_version = 9;
        assert!(parse(&raw.to_bytes()).unwrap_err().reason.contains("schema"));
    }
}
