//! The four storage services behind the pipeline: a small-value cache, an
//! append-only telemetry log, a content-addressed algorithm store and the
//! power-control configuration, plus the forge-sensors cache that mirrors
//! the plant's current voltages, mode and material.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FabricError;
use crate::twin::Mode;
use crate::ZONE_COUNT;

/// Key-value cache for small pieces of data.
#[derive(Default)]
pub struct CacheStore {
    map: Mutex<HashMap<String, serde_json::Value>>,
}

impl CacheStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, key: &str, value: serde_json::Value) {
        self.map.lock().unwrap().insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<serde_json::Value> {
        self.map.lock().unwrap().get(key).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Record,
    Snapshot,
    ProductionChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ns: u64,
    pub kind: LogKind,
    pub payload: serde_json::Value,
}

/// Append-only structured log for records, snapshots and production changes.
#[derive(Default)]
pub struct TelemetryStore {
    entries: Mutex<Vec<LogEntry>>,
}

impl TelemetryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, kind: LogKind, timestamp_ns: u64, payload: serde_json::Value) -> u64 {
        let mut entries = self.entries.lock().unwrap();
        let seq = entries.len() as u64;
        entries.push(LogEntry { seq, timestamp_ns, kind, payload });
        seq
    }

    /// Entries within `[from_ns, to_ns]`, optionally filtered by kind.
    pub fn scan(&self, from_ns: u64, to_ns: u64, kind: Option<LogKind>) -> Vec<LogEntry> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.timestamp_ns >= from_ns && e.timestamp_ns <= to_ns)
            .filter(|e| kind.map_or(true, |k| e.kind == k))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Content-addressed version id: the SHA-256 of the stored bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionId(pub String);

impl VersionId {
    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }
}

impl std::fmt::Display for VersionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content-addressed blob store for exported algorithm bundles.
#[derive(Default)]
pub struct AlgorithmStore {
    blobs: Mutex<HashMap<VersionId, Vec<u8>>>,
}

impl AlgorithmStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, bytes: Vec<u8>) -> VersionId {
        let id = VersionId(hex::encode(Sha256::digest(&bytes)));
        self.blobs.lock().unwrap().insert(id.clone(), bytes);
        id
    }

    pub fn get(&self, version: &VersionId) -> Result<Vec<u8>, FabricError> {
        self.blobs
            .lock()
            .unwrap()
            .get(version)
            .cloned()
            .ok_or_else(|| FabricError::VersionNotFound(version.to_string()))
    }

    pub fn contains(&self, version: &VersionId) -> bool {
        self.blobs.lock().unwrap().contains_key(version)
    }

    pub fn versions(&self) -> Vec<VersionId> {
        let mut v: Vec<VersionId> = self.blobs.lock().unwrap().keys().cloned().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Persist every blob as `<hex>.bin` under `dir`.
    pub fn dump_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (id, bytes) in self.blobs.lock().unwrap().iter() {
            std::fs::write(dir.join(format!("{}.bin", id.0)), bytes)?;
        }
        Ok(())
    }

    /// Load blobs dumped by [`AlgorithmStore::dump_dir`]; ids are re-derived
    /// from content, so tampered files change identity.
    pub fn load_dir(&self, dir: &Path) -> std::io::Result<usize> {
        let mut loaded = 0;
        if !dir.exists() {
            return Ok(0);
        }
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("bin") {
                self.put(std::fs::read(&path)?);
                loaded += 1;
            }
        }
        Ok(loaded)
    }
}

/// The manager and algorithm version active for one production mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveAlgorithm {
    pub manager: String,
    pub version: VersionId,
}

/// Which manager and algorithm version each mode runs. Every mode always
/// names exactly one active manager.
pub struct PowerConfigStore {
    active: Mutex<HashMap<Mode, ActiveAlgorithm>>,
}

impl PowerConfigStore {
    pub fn new(normal: ActiveAlgorithm, warmholding: ActiveAlgorithm) -> Self {
        let mut map = HashMap::new();
        map.insert(Mode::NormalProduction, normal);
        map.insert(Mode::Warmholding, warmholding);
        PowerConfigStore { active: Mutex::new(map) }
    }

    pub fn get(&self, mode: Mode) -> ActiveAlgorithm {
        self.active.lock().unwrap()[&mode].clone()
    }

    pub fn set(&self, mode: Mode, manager: impl Into<String>, version: VersionId) {
        self.active
            .lock()
            .unwrap()
            .insert(mode, ActiveAlgorithm { manager: manager.into(), version });
    }

    pub fn to_json(&self) -> serde_json::Value {
        let active = self.active.lock().unwrap();
        serde_json::json!({
            "normal_production": active[&Mode::NormalProduction],
            "warmholding": active[&Mode::Warmholding],
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, FabricError> {
        let parse = |key: &str| -> Result<ActiveAlgorithm, FabricError> {
            serde_json::from_value(value[key].clone())
                .map_err(|e| FabricError::BadPayload(format!("power config {key}: {e}")))
        };
        Ok(PowerConfigStore::new(parse("normal_production")?, parse("warmholding")?))
    }
}

/// Cached plant-side state: demanded voltages, active mode, material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeCache {
    pub voltages: [f64; ZONE_COUNT],
    pub mode: Mode,
    pub material: String,
    pub updated_ns: u64,
    pub stale: bool,
}

#[derive(Default)]
pub struct ForgeSensorsStore {
    current: Mutex<Option<ForgeCache>>,
}

impl ForgeSensorsStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, voltages: [f64; ZONE_COUNT], mode: Mode, material: String, now_ns: u64) {
        *self.current.lock().unwrap() = Some(ForgeCache {
            voltages,
            mode,
            material,
            updated_ns: now_ns,
            stale: false,
        });
    }

    pub fn get(&self) -> Option<ForgeCache> {
        self.current.lock().unwrap().clone()
    }

    /// Keep the cached values but flag them as stale (server unreachable).
    pub fn mark_stale(&self) {
        if let Some(cache) = self.current.lock().unwrap().as_mut() {
            cache.stale = true;
        }
    }
}
