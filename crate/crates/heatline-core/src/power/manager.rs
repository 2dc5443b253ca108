//! Decision managers: the normal-production manager runs the deployed
//! wrapped model on each snapshot, the warmholding manager applies a
//! band-threshold rule. Both convert power decisions to voltages, pass them
//! through the sanity check and stamp provenance. Algorithm versions
//! hot-swap without dropping snapshots: a decision in flight finishes on the
//! version it started with.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::convert::{zone_voltage, PowerUpdate, Provenance};
use super::wrapper::WrappedModel;
use super::PowerError;
use crate::clock::Clock;
use crate::fabric::{AlgorithmStore, ForgeSensorsStore, VersionId};
use crate::telemetry::StateSnapshot;
use crate::twin::{PowerAction, TempBand};
use crate::ZONE_COUNT;

/// Rules enforced on every candidate update before it may be published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanityLimits {
    pub voltage_bounds: (f64, f64),
    /// Largest allowed |V_new - V_old| per zone, V.
    pub max_delta: f64,
}

impl Default for SanityLimits {
    fn default() -> Self {
        SanityLimits { voltage_bounds: (1.0, 1000.0), max_delta: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SanityVerdict {
    Accept,
    Reject { rule: &'static str, zone: usize },
}

/// Accept iff every candidate voltage is finite, within bounds and within
/// the per-update delta limit of the old voltage.
pub fn sanity_check(
    candidate: &[f64; ZONE_COUNT],
    v_old: &[f64; ZONE_COUNT],
    limits: &SanityLimits,
) -> SanityVerdict {
    for zone in 0..ZONE_COUNT {
        let v = candidate[zone];
        if !v.is_finite() {
            return SanityVerdict::Reject { rule: "non_finite", zone };
        }
        if v < limits.voltage_bounds.0 || v > limits.voltage_bounds.1 {
            return SanityVerdict::Reject { rule: "voltage_bound", zone };
        }
        if (v - v_old[zone]).abs() > limits.max_delta {
            return SanityVerdict::Reject { rule: "voltage_delta", zone };
        }
    }
    SanityVerdict::Accept
}

/// How power actions translate into target powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    pub action_step_kw: f64,
    pub power_bounds: (f64, f64),
}

impl Default for PowerPolicy {
    fn default() -> Self {
        PowerPolicy { action_step_kw: 5.0, power_bounds: (0.0, 600.0) }
    }
}

impl PowerPolicy {
    pub fn apply(&self, action: PowerAction, current_kw: f64) -> f64 {
        let target = match action {
            PowerAction::NoChange => current_kw,
            PowerAction::Increase => current_kw + self.action_step_kw,
            PowerAction::Decrease => current_kw - self.action_step_kw,
            PowerAction::DropToLow => self.power_bounds.0,
        };
        target.clamp(self.power_bounds.0, self.power_bounds.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// Snapshot older than the staleness bound.
    Stale,
    /// No cached voltages to convert against.
    MissingVoltages,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionOutcome {
    Update(PowerUpdate),
    Skipped(SkipReason),
    Rejected { rule: &'static str, zone: usize },
}

#[derive(Debug, Default)]
pub struct ManagerCounters {
    pub decided: AtomicU64,
    pub skipped_stale: AtomicU64,
    pub skipped_missing_voltages: AtomicU64,
    pub rejected: AtomicU64,
}

/// Default staleness bound on snapshots before deciding, ns.
pub const DEFAULT_STALENESS_BOUND_NS: u64 = 5 * crate::clock::NS_PER_SEC;

struct ActiveModel {
    version: VersionId,
    model: Arc<WrappedModel>,
}

/// Normal-production manager: wrapped model in, power update out.
pub struct NpManager {
    id: String,
    active: Mutex<ActiveModel>,
    policy: PowerPolicy,
    limits: SanityLimits,
    staleness_bound_ns: u64,
    clock: Clock,
    pub counters: ManagerCounters,
}

impl NpManager {
    pub fn new(
        id: impl Into<String>,
        version: VersionId,
        model: WrappedModel,
        policy: PowerPolicy,
        limits: SanityLimits,
        staleness_bound_ns: u64,
        clock: Clock,
    ) -> Self {
        NpManager {
            id: id.into(),
            active: Mutex::new(ActiveModel { version, model: Arc::new(model) }),
            policy,
            limits,
            staleness_bound_ns,
            clock,
            counters: ManagerCounters::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn active_version(&self) -> VersionId {
        self.active.lock().unwrap().version.clone()
    }

    /// Swap in another algorithm version from the store. Decisions already
    /// holding the old model finish on it; the swap is the linearization
    /// point for everything after.
    pub fn hot_swap(&self, store: &AlgorithmStore, version: &VersionId) -> Result<(), PowerError> {
        let bytes = store
            .get(version)
            .map_err(|_| PowerError::UnknownVersion(version.to_string()))?;
        let model = WrappedModel::from_bundle_json(&bytes)?;
        let mut active = self.active.lock().unwrap();
        *active = ActiveModel { version: version.clone(), model: Arc::new(model) };
        Ok(())
    }

    /// Decide on one snapshot using the deployed model and the cached
    /// voltages. NoChange zones keep their voltage untouched; changed zones
    /// go through the power-to-voltage conversion.
    pub fn decide(&self, snapshot: &StateSnapshot, forge: &ForgeSensorsStore) -> DecisionOutcome {
        let (version, model) = {
            let active = self.active.lock().unwrap();
            (active.version.clone(), Arc::clone(&active.model))
        };
        let now = self.clock.now_ns();
        if now.saturating_sub(snapshot.snapshot_time_ns) > self.staleness_bound_ns {
            self.counters.skipped_stale.fetch_add(1, Ordering::SeqCst);
            return DecisionOutcome::Skipped(SkipReason::Stale);
        }
        let Some(cache) = forge.get() else {
            self.counters.skipped_missing_voltages.fetch_add(1, Ordering::SeqCst);
            return DecisionOutcome::Skipped(SkipReason::MissingVoltages);
        };
        let actions = model.decide(&snapshot.feature_vector());
        convert_and_check(
            actions,
            snapshot,
            &cache.voltages,
            self.policy,
            &self.limits,
            &self.counters,
            &version,
            &self.id,
        )
    }
}

/// Shared tail of both managers' decision path: actions to target powers,
/// power-to-voltage conversion (NoChange zones keep their voltage), the
/// sanity check, and provenance stamping.
#[allow(clippy::too_many_arguments)]
fn convert_and_check(
    actions: [PowerAction; ZONE_COUNT],
    snapshot: &StateSnapshot,
    v_old: &[f64; ZONE_COUNT],
    policy: PowerPolicy,
    limits: &SanityLimits,
    counters: &ManagerCounters,
    version: &VersionId,
    manager: &str,
) -> DecisionOutcome {
    let mut candidate = [0.0f64; ZONE_COUNT];
    for zone in 0..ZONE_COUNT {
        let p_old = snapshot.powers[zone];
        let p_new = policy.apply(actions[zone], p_old);
        candidate[zone] = if actions[zone] == PowerAction::NoChange {
            v_old[zone]
        } else {
            match zone_voltage(v_old[zone], p_old, p_new) {
                Ok(v) => f64::from(v),
                // Undefined ratio: the zone is flagged by leaving it alone.
                Err(PowerError::UndefinedRatio { .. }) => v_old[zone],
                Err(_) => f64::NAN,
            }
        };
    }
    match sanity_check(&candidate, v_old, limits) {
        SanityVerdict::Accept => {
            counters.decided.fetch_add(1, Ordering::SeqCst);
            DecisionOutcome::Update(PowerUpdate {
                new_voltages: candidate.map(|v| v as u32),
                provenance: Provenance {
                    manager: manager.to_string(),
                    algorithm_version: version.to_string(),
                    snapshot_time_ns: snapshot.snapshot_time_ns,
                },
            })
        }
        SanityVerdict::Reject { rule, zone } => {
            counters.rejected.fetch_add(1, Ordering::SeqCst);
            DecisionOutcome::Rejected { rule, zone }
        }
    }
}

/// Rule-based warmholding manager: mean zone temperature under the band
/// floor raises power, over the ceiling lowers it.
pub struct WhManager {
    id: String,
    version: VersionId,
    bands: [TempBand; ZONE_COUNT],
    zone_sensor_ranges: [(usize, usize); ZONE_COUNT],
    policy: PowerPolicy,
    limits: SanityLimits,
    clock: Clock,
    staleness_bound_ns: u64,
    pub counters: ManagerCounters,
}

impl WhManager {
    pub fn new(
        id: impl Into<String>,
        version: VersionId,
        bands: [TempBand; ZONE_COUNT],
        policy: PowerPolicy,
        limits: SanityLimits,
        clock: Clock,
    ) -> Self {
        let zone_sensor_ranges =
            std::array::from_fn(crate::twin::TwinConfig::forge_index_range);
        WhManager {
            id: id.into(),
            version,
            bands,
            zone_sensor_ranges,
            policy,
            limits,
            clock,
            staleness_bound_ns: DEFAULT_STALENESS_BOUND_NS,
            counters: ManagerCounters::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn decide(&self, snapshot: &StateSnapshot, forge: &ForgeSensorsStore) -> DecisionOutcome {
        let now = self.clock.now_ns();
        if now.saturating_sub(snapshot.snapshot_time_ns) > self.staleness_bound_ns {
            self.counters.skipped_stale.fetch_add(1, Ordering::SeqCst);
            return DecisionOutcome::Skipped(SkipReason::Stale);
        }
        let Some(cache) = forge.get() else {
            self.counters.skipped_missing_voltages.fetch_add(1, Ordering::SeqCst);
            return DecisionOutcome::Skipped(SkipReason::MissingVoltages);
        };
        let mut actions = [PowerAction::NoChange; ZONE_COUNT];
        for zone in 0..ZONE_COUNT {
            let (lo, hi) = self.zone_sensor_ranges[zone];
            let temps = &snapshot.temps[lo..hi];
            let mean = temps.iter().sum::<f64>() / temps.len() as f64;
            actions[zone] = if mean < self.bands[zone].min {
                PowerAction::Increase
            } else if mean > self.bands[zone].max {
                PowerAction::Decrease
            } else {
                PowerAction::NoChange
            };
        }
        convert_and_check(
            actions,
            snapshot,
            &cache.voltages,
            self.policy,
            &self.limits,
            &self.counters,
            &self.version,
            &self.id,
        )
    }
}
