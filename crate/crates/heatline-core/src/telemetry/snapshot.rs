//! Per-second state snapshots fused from reformatted telemetry.
//!
//! One window per wall second; within a window the latest value per field
//! wins. A window closes when a record from a later second arrives (or on
//! flush). Windows complete enough are stored and published; incomplete ones
//! are reported with their missing fields. Fields absent from a window carry
//! over from the last known value so published snapshots stay fully formed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::record::{RecordKind, RecordValue, TelemetryRecord};
use crate::clock::NS_PER_SEC;
use crate::fabric::{CacheStore, ForgeSensorsStore, LogKind, TelemetryStore};
use crate::twin::{Mode, FORGE_SENSOR_COUNT};
use crate::ZONE_COUNT;

pub const DEFAULT_COMPLETENESS_THRESHOLD: f64 = 0.9;

/// Fields a fully formed snapshot expects in its window: 18 temperatures,
/// 5 powers, mode and material.
pub const EXPECTED_FIELDS: usize = FORGE_SENSOR_COUNT + ZONE_COUNT + 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Second-resolution timestamp (ns, multiple of 1e9).
    pub snapshot_time_ns: u64,
    /// Forge sensor order.
    pub temps: Vec<f64>,
    pub powers: [f64; ZONE_COUNT],
    /// Demanded voltages mirrored from the forge sensors cache at build
    /// time; zeros when the cache has never been primed.
    pub voltages: [f64; ZONE_COUNT],
    pub mode: Mode,
    pub material_id: String,
    pub rod_front_m: Option<f64>,
    /// Fraction of expected fields present in the window.
    pub completeness: f64,
}

impl StateSnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("snapshot serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// The unified 23-feature vector: 18 temperatures then 5 powers.
    pub fn feature_vector(&self) -> [f64; FORGE_SENSOR_COUNT + ZONE_COUNT] {
        let mut out = [0.0; FORGE_SENSOR_COUNT + ZONE_COUNT];
        out[..FORGE_SENSOR_COUNT].copy_from_slice(&self.temps);
        out[FORGE_SENSOR_COUNT..].copy_from_slice(&self.powers);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotOutcome {
    Published(StateSnapshot),
    Incomplete { second: u64, completeness: f64, missing: Vec<String> },
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot<T> {
    value: Option<(T, u64)>,
}

impl<T: Copy> Slot<T> {
    /// Latest timestamp wins; arrival order breaks ties.
    fn offer(&mut self, value: T, ts: u64) {
        match self.value {
            Some((_, prev)) if prev > ts => {}
            _ => self.value = Some((value, ts)),
        }
    }
}

#[derive(Debug, Default)]
struct Window {
    temps: Vec<Slot<f64>>,
    powers: [Slot<f64>; ZONE_COUNT],
    mode: Option<(Mode, u64)>,
    material: Option<(String, u64)>,
    rod_front: Option<(f64, u64)>,
}

impl Window {
    fn new() -> Self {
        Window { temps: vec![Slot::default(); FORGE_SENSOR_COUNT], ..Default::default() }
    }

    fn present_fields(&self) -> usize {
        self.temps.iter().filter(|s| s.value.is_some()).count()
            + self.powers.iter().filter(|s| s.value.is_some()).count()
            + usize::from(self.mode.is_some())
            + usize::from(self.material.is_some())
    }

    fn missing_fields(&self) -> Vec<String> {
        let mut missing = Vec::new();
        for (i, slot) in self.temps.iter().enumerate() {
            if slot.value.is_none() {
                missing.push(format!("temp_{}", i + 1));
            }
        }
        for (z, slot) in self.powers.iter().enumerate() {
            if slot.value.is_none() {
                missing.push(format!("power_z{}", z + 1));
            }
        }
        if self.mode.is_none() {
            missing.push("mode".to_string());
        }
        if self.material.is_none() {
            missing.push("material".to_string());
        }
        missing
    }
}

/// Last known values carried into snapshots when a window misses a field.
#[derive(Debug, Clone)]
struct FieldCache {
    temps: Vec<f64>,
    powers: [f64; ZONE_COUNT],
    mode: Mode,
    material: String,
}

pub struct SnapshotBuilder {
    threshold: f64,
    current_second: Option<u64>,
    window: Window,
    last_known: FieldCache,
    last_material_logged: Option<String>,
    telemetry_store: Arc<TelemetryStore>,
    cache_store: Arc<CacheStore>,
    forge_store: Arc<ForgeSensorsStore>,
    late_records: u64,
}

impl SnapshotBuilder {
    pub fn new(
        threshold: f64,
        telemetry_store: Arc<TelemetryStore>,
        cache_store: Arc<CacheStore>,
        forge_store: Arc<ForgeSensorsStore>,
    ) -> Self {
        SnapshotBuilder {
            threshold,
            current_second: None,
            window: Window::new(),
            last_known: FieldCache {
                temps: vec![0.0; FORGE_SENSOR_COUNT],
                powers: [0.0; ZONE_COUNT],
                mode: Mode::NormalProduction,
                material: String::new(),
            },
            last_material_logged: None,
            telemetry_store,
            cache_store,
            forge_store,
            late_records: 0,
        }
    }

    pub fn late_records(&self) -> u64 {
        self.late_records
    }

    /// Fold one record in; returns the outcome of the window it closed, if
    /// this record's second advanced past it.
    pub fn ingest(&mut self, record: &TelemetryRecord) -> Option<SnapshotOutcome> {
        let second = record.snapshot_second();
        let mut closed = None;
        match self.current_second {
            None => self.current_second = Some(second),
            Some(current) if second > current => {
                closed = Some(self.close_window(current));
                self.current_second = Some(second);
            }
            Some(current) if second < current => {
                // Stale straggler from an already-closed second.
                self.late_records += 1;
                return None;
            }
            _ => {}
        }
        self.offer(record);
        closed
    }

    /// Close the in-progress window, if any.
    pub fn flush(&mut self) -> Option<SnapshotOutcome> {
        let second = self.current_second.take()?;
        Some(self.close_window(second))
    }

    fn offer(&mut self, record: &TelemetryRecord) {
        let ts = record.timestamp_ns;
        match (record.kind, &record.value) {
            (RecordKind::Temperature, RecordValue::Number(v)) => {
                if let Some(i) = record.sensor_index {
                    if i < FORGE_SENSOR_COUNT {
                        self.window.temps[i].offer(*v, ts);
                    }
                }
            }
            (RecordKind::Power, RecordValue::Number(v)) => {
                if let Some(z) = record.sensor_index {
                    if z < ZONE_COUNT {
                        self.window.powers[z].offer(*v, ts);
                    }
                }
            }
            (RecordKind::Mode, RecordValue::Mode(m)) => match self.window.mode {
                Some((_, prev)) if prev > ts => {}
                _ => self.window.mode = Some((*m, ts)),
            },
            (RecordKind::Material, RecordValue::Text(s)) => match &self.window.material {
                Some((_, prev)) if *prev > ts => {}
                _ => self.window.material = Some((s.clone(), ts)),
            },
            (RecordKind::Position, RecordValue::Number(v)) => match self.window.rod_front {
                Some((_, prev)) if prev > ts => {}
                _ => self.window.rod_front = Some((*v, ts)),
            },
            _ => {}
        }
    }

    fn close_window(&mut self, second: u64) -> SnapshotOutcome {
        let window = std::mem::replace(&mut self.window, Window::new());
        let present = window.present_fields();
        let completeness = present as f64 / EXPECTED_FIELDS as f64;
        if completeness < self.threshold {
            return SnapshotOutcome::Incomplete {
                second,
                completeness,
                missing: window.missing_fields(),
            };
        }

        for (i, slot) in window.temps.iter().enumerate() {
            if let Some((v, _)) = slot.value {
                self.last_known.temps[i] = v;
            }
        }
        for (z, slot) in window.powers.iter().enumerate() {
            if let Some((v, _)) = slot.value {
                self.last_known.powers[z] = v;
            }
        }
        if let Some((m, _)) = window.mode {
            self.last_known.mode = m;
        }
        if let Some((m, _)) = &window.material {
            self.last_known.material = m.clone();
        }

        let voltages = self
            .forge_store
            .get()
            .map(|cache| cache.voltages)
            .unwrap_or([0.0; ZONE_COUNT]);
        let snapshot = StateSnapshot {
            snapshot_time_ns: second * NS_PER_SEC,
            temps: self.last_known.temps.clone(),
            powers: self.last_known.powers,
            voltages,
            mode: self.last_known.mode,
            material_id: self.last_known.material.clone(),
            rod_front_m: window.rod_front.map(|(v, _)| v),
            completeness,
        };

        self.telemetry_store.append(
            LogKind::Snapshot,
            snapshot.snapshot_time_ns,
            serde_json::to_value(&snapshot).expect("snapshot serializes"),
        );
        self.cache_store
            .put("material", serde_json::json!(snapshot.material_id));
        if self.last_material_logged.as_deref() != Some(snapshot.material_id.as_str()) {
            if self.last_material_logged.is_some() {
                self.telemetry_store.append(
                    LogKind::ProductionChange,
                    snapshot.snapshot_time_ns,
                    serde_json::json!({
                        "from": self.last_material_logged,
                        "to": snapshot.material_id,
                    }),
                );
            }
            self.last_material_logged = Some(snapshot.material_id.clone());
        }
        SnapshotOutcome::Published(snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::record::{power_tag, temperature_tag, RawTelemetry, TAG_MATERIAL, TAG_MODE};

    fn builder() -> SnapshotBuilder {
        SnapshotBuilder::new(
            0.8,
            Arc::new(TelemetryStore::new()),
            Arc::new(CacheStore::new()),
            Arc::new(ForgeSensorsStore::new()),
        )
    }

    fn record(tag: &str, value: f64, ts: u64) -> TelemetryRecord {
        crate::telemetry::record::parse(&RawTelemetry::number(tag, value, ts).to_bytes()).unwrap()
    }

    fn text_record(tag: &str, value: &str, ts: u64) -> TelemetryRecord {
        crate::telemetry::record::parse(&RawTelemetry::text(tag, value, ts).to_bytes()).unwrap()
    }

    fn full_sweep(second: u64, temp: f64) -> Vec<TelemetryRecord> {
        let ts = second * NS_PER_SEC + 1000;
        let mut records = Vec::new();
        for zone in 0..ZONE_COUNT {
            for i in 0..crate::twin::FORGE_SENSORS_PER_ZONE[zone] {
                records.push(record(&temperature_tag(zone, i), temp, ts));
            }
            records.push(record(&power_tag(zone), 100.0 + zone as f64, ts));
        }
        records.push(text_record(TAG_MODE, "normal_production", ts));
        records.push(text_record(TAG_MATERIAL, "steel-42", ts));
        records
    }

    #[test]
    fn complete_window_publishes_with_completeness_one() {
        let mut b = builder();
        for r in full_sweep(10, 1100.0) {
            assert!(b.ingest(&r).is_none());
        }
        // A record from the next second closes the window.
        let outcome = b.ingest(&record("T_Z1_1", 1101.0, 11 * NS_PER_SEC)).unwrap();
        match outcome {
            SnapshotOutcome::Published(s) => {
                assert_eq!(s.completeness, 1.0);
                assert_eq!(s.snapshot_time_ns, 10 * NS_PER_SEC);
                assert!(s.temps.iter().all(|t| *t == 1100.0));
                assert_eq!(s.powers[3], 103.0);
                assert_eq!(s.material_id, "steel-42");
            }
            other => panic!("expected published, got {other:?}"),
        }
    }

    #[test]
    fn missing_nine_temps_is_incomplete_below_point_eight() {
        let mut b = builder();
        let records = full_sweep(5, 1000.0);
        // Drop the first 9 temperature records: completeness 16/25 = 0.64.
        let mut kept = 0;
        for r in &records {
            if r.kind == RecordKind::Temperature {
                kept += 1;
                if kept <= 9 {
                    continue;
                }
            }
            b.ingest(r);
        }
        match b.flush().unwrap() {
            SnapshotOutcome::Incomplete { completeness, missing, .. } => {
                assert!((completeness - 16.0 / 25.0).abs() < 1e-12);
                assert_eq!(missing.len(), 9);
                assert!(missing[0].starts_with("temp_"));
            }
            other => panic!("expected incomplete, got {other:?}"),
        }
    }

    #[test]
    fn later_timestamp_wins_within_a_window() {
        let mut b = builder();
        for r in full_sweep(3, 900.0) {
            b.ingest(&r);
        }
        // Same sensor, same second, later timestamp.
        b.ingest(&record("T_Z3_2", 950.0, 3 * NS_PER_SEC + 5000));
        // And an earlier one that must lose.
        b.ingest(&record("T_Z3_2", 880.0, 3 * NS_PER_SEC + 10));
        match b.flush().unwrap() {
            SnapshotOutcome::Published(s) => assert_eq!(s.temps[7], 950.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn material_change_logs_production_change_event() {
        let store = Arc::new(TelemetryStore::new());
        let mut b = SnapshotBuilder::new(
            0.8,
            store.clone(),
            Arc::new(CacheStore::new()),
            Arc::new(ForgeSensorsStore::new()),
        );
        for r in full_sweep(1, 1000.0) {
            b.ingest(&r);
        }
        b.flush();
        let mut sweep2 = full_sweep(2, 1000.0);
        for r in &mut sweep2 {
            if r.kind == RecordKind::Material {
                r.value = RecordValue::Text("steel-77".to_string());
            }
            b.ingest(r);
        }
        b.flush();
        let changes = store.scan(0, u64::MAX, Some(LogKind::ProductionChange));
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].payload["to"], "steel-77");
        assert_eq!(store.scan(0, u64::MAX, Some(LogKind::Snapshot)).len(), 2);
    }

    #[test]
    fn carried_over_fields_keep_snapshots_fully_formed() {
        let mut b = builder();
        for r in full_sweep(1, 1000.0) {
            b.ingest(&r);
        }
        b.ingest(&record("T_Z1_1", 999.0, 2 * NS_PER_SEC));
        // Second 2: only one temp arrives; rest carried from second 1.
        // 1/25 fields -> incomplete, nothing published.
        match b.flush().unwrap() {
            SnapshotOutcome::Incomplete { completeness, .. } => {
                assert!((completeness - 1.0 / 25.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stale_stragglers_are_counted_not_windowed() {
        let mut b = builder();
        for r in full_sweep(5, 1000.0) {
            b.ingest(&r);
        }
        b.ingest(&record("T_Z1_1", 1.0, 6 * NS_PER_SEC)); // closes second 5
        assert_eq!(b.late_records(), 0);
        b.ingest(&record("T_Z1_1", 2.0, 5 * NS_PER_SEC)); // straggler
        assert_eq!(b.late_records(), 1);
    }

    #[test]
    fn snapshot_rate_is_one_per_second_on_a_complete_stream() {
        let mut b = builder();
        let mut published = 0;
        for second in 0..60 {
            // 200 records/s synthetic stream: 8 sweeps of 25 fields.
            for sweep in 0..8 {
                for mut r in full_sweep(second, 1000.0 + sweep as f64) {
                    r.timestamp_ns = second * NS_PER_SEC + sweep * 100_000;
                    if let Some(SnapshotOutcome::Published(_)) = b.ingest(&r) {
                        published += 1;
                    }
                }
            }
        }
        if let Some(SnapshotOutcome::Published(_)) = b.flush() {
            published += 1;
        }
        assert_eq!(published, 60);
    }

    #[test]
    fn voltages_mirror_the_forge_cache() {
        let forge = Arc::new(ForgeSensorsStore::new());
        forge.set([240.0, 250.0, 210.0, 180.0, 150.0], Mode::NormalProduction, "m".into(), 0);
        let mut b = SnapshotBuilder::new(
            0.8,
            Arc::new(TelemetryStore::new()),
            Arc::new(CacheStore::new()),
            forge,
        );
        for r in full_sweep(1, 1000.0) {
            b.ingest(&r);
        }
        match b.flush().unwrap() {
            SnapshotOutcome::Published(s) => assert_eq!(s.voltages[1], 250.0),
            other => panic!("{other:?}"),
        }
    }
}
