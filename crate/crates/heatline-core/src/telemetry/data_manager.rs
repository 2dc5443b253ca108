//! The data-manager services that talk to the tag server: the power updater
//! (writes accepted voltage updates to the plant tags, gated on the active
//! mode), the forge data retriever (polls voltages/mode/material into the
//! forge sensors cache) and the heartbeat connection check.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::latency::StageStats;
use super::record::{voltage_tag, TAG_MATERIAL, TAG_MODE};
use crate::clock::Clock;
use crate::fabric::{FabricError, ForgeSensorsStore, TagServer, TagValue};
use crate::power::PowerUpdate;
use crate::twin::Mode;
use crate::ZONE_COUNT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, backoff: Duration::from_millis(10) }
    }
}

#[derive(Debug, Default)]
pub struct UpdaterCounters {
    pub applied: AtomicU64,
    pub ignored_inactive_mode: AtomicU64,
    pub alarms: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyResult {
    Applied,
    IgnoredInactiveMode,
    Alarm,
}

/// Writes power updates to the five voltage tags, selecting only updates
/// from the topic matching the currently active mode. Transient tag-server
/// failures are retried with bounded backoff; exhaustion raises an alarm.
pub struct PowerUpdater {
    tags: Arc<TagServer>,
    forge: Arc<ForgeSensorsStore>,
    retry: RetryPolicy,
    pub counters: Arc<UpdaterCounters>,
    stats: Arc<StageStats>,
}

impl PowerUpdater {
    pub fn new(
        tags: Arc<TagServer>,
        forge: Arc<ForgeSensorsStore>,
        retry: RetryPolicy,
        counters: Arc<UpdaterCounters>,
        stats: Arc<StageStats>,
    ) -> Self {
        PowerUpdater { tags, forge, retry, counters, stats }
    }

    /// Active mode comes from the forge sensors cache; updates sourced from
    /// the other mode's topic are counted and ignored.
    pub fn apply(&self, update: &PowerUpdate, source_mode: Mode) -> ApplyResult {
        let started = Instant::now();
        let active_mode = self
            .forge
            .get()
            .map(|c| c.mode)
            .unwrap_or(Mode::NormalProduction);
        let result = if source_mode != active_mode {
            self.counters.ignored_inactive_mode.fetch_add(1, Ordering::SeqCst);
            ApplyResult::IgnoredInactiveMode
        } else {
            match self.write_all(update) {
                Ok(()) => {
                    self.counters.applied.fetch_add(1, Ordering::SeqCst);
                    ApplyResult::Applied
                }
                Err(_) => {
                    self.counters.alarms.fetch_add(1, Ordering::SeqCst);
                    ApplyResult::Alarm
                }
            }
        };
        self.stats.record_ms(started.elapsed().as_secs_f64() * 1e3);
        result
    }

    fn write_all(&self, update: &PowerUpdate) -> Result<(), FabricError> {
        for zone in 0..ZONE_COUNT {
            self.write_with_retry(
                &voltage_tag(zone),
                TagValue::Int(i64::from(update.new_voltages[zone])),
            )?;
        }
        Ok(())
    }

    fn write_with_retry(&self, tag: &str, value: TagValue) -> Result<(), FabricError> {
        let mut last_err = None;
        for attempt in 0..self.retry.attempts {
            match self.tags.write(tag, value.clone()) {
                Ok(()) => return Ok(()),
                Err(e) => {
                    last_err = Some(e);
                    if attempt + 1 < self.retry.attempts {
                        std::thread::sleep(self.retry.backoff);
                    }
                }
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

#[derive(Debug, Default)]
pub struct RetrieverCounters {
    pub refreshes: AtomicU64,
    pub failures: AtomicU64,
}

/// Periodically mirrors the current voltages, active mode and material from
/// the tag server into the forge sensors cache. An unreachable server marks
/// the cached entry stale but keeps its values.
pub struct ForgeDataRetriever {
    tags: Arc<TagServer>,
    forge: Arc<ForgeSensorsStore>,
    clock: Clock,
    pub counters: Arc<RetrieverCounters>,
}

impl ForgeDataRetriever {
    pub fn new(tags: Arc<TagServer>, forge: Arc<ForgeSensorsStore>, clock: Clock) -> Self {
        ForgeDataRetriever {
            tags,
            forge,
            clock,
            counters: Arc::new(RetrieverCounters::default()),
        }
    }

    pub fn poll_once(&self) -> Result<(), FabricError> {
        let result = self.try_poll();
        match result {
            Ok(()) => {
                self.counters.refreshes.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
            Err(e) => {
                self.counters.failures.fetch_add(1, Ordering::SeqCst);
                self.forge.mark_stale();
                Err(e)
            }
        }
    }

    fn try_poll(&self) -> Result<(), FabricError> {
        let mut voltages = [0.0; ZONE_COUNT];
        for (zone, v) in voltages.iter_mut().enumerate() {
            let (value, _) = self.tags.read(&voltage_tag(zone))?;
            *v = value
                .as_f64()
                .ok_or(FabricError::TagTypeMismatch {
                    tag: voltage_tag(zone),
                    expected: "number",
                    got: "other",
                })?;
        }
        let (mode_value, _) = self.tags.read(TAG_MODE)?;
        let mode = mode_value
            .as_str()
            .and_then(Mode::parse)
            .ok_or(FabricError::TagTypeMismatch { tag: TAG_MODE.into(), expected: "mode string", got: "other" })?;
        let (material_value, _) = self.tags.read(TAG_MATERIAL)?;
        let material = material_value
            .as_str()
            .ok_or(FabricError::TagTypeMismatch {
                tag: TAG_MATERIAL.into(),
                expected: "string",
                got: "other",
            })?
            .to_string();
        self.forge.set(voltages, mode, material, self.clock.now_ns());
        Ok(())
    }
}

pub const HEARTBEAT_TAG: &str = "HEARTBEAT";

#[derive(Debug, Default)]
pub struct HeartbeatCounters {
    pub samples: AtomicU64,
    pub latency_alarms: AtomicU64,
    pub integrity_alarms: AtomicU64,
}

/// Writes a nonce to the heartbeat tag, reads it back and records the round
/// trip. `k` consecutive over-bound samples raise a latency alarm; a nonce
/// mismatch raises an integrity alarm immediately.
pub struct ConnectionCheck {
    tags: Arc<TagServer>,
    latency_bound: Duration,
    consecutive_threshold: u32,
    consecutive_over: u32,
    nonce: i64,
    pending: Option<Instant>,
    pub counters: Arc<HeartbeatCounters>,
    pub samples_ms: Arc<Mutex<Vec<f64>>>,
}

impl ConnectionCheck {
    pub fn new(tags: Arc<TagServer>, latency_bound: Duration, consecutive_threshold: u32) -> Self {
        ConnectionCheck {
            tags,
            latency_bound,
            consecutive_threshold,
            consecutive_over: 0,
            nonce: 0,
            pending: None,
            counters: Arc::new(HeartbeatCounters::default()),
            samples_ms: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn check_once(&mut self) -> Result<f64, FabricError> {
        self.write_nonce()?;
        self.read_back()
    }

    pub fn write_nonce(&mut self) -> Result<(), FabricError> {
        self.nonce += 1;
        self.pending = Some(Instant::now());
        self.tags.write(HEARTBEAT_TAG, TagValue::Int(self.nonce))
    }

    pub fn read_back(&mut self) -> Result<f64, FabricError> {
        let started = self.pending.take().unwrap_or_else(Instant::now);
        let (value, _) = self.tags.read(HEARTBEAT_TAG)?;
        let elapsed = started.elapsed();
        if value != TagValue::Int(self.nonce) {
            self.counters.integrity_alarms.fetch_add(1, Ordering::SeqCst);
            return Err(FabricError::BadPayload(format!(
                "heartbeat nonce mismatch: wrote {}, read {value:?}",
                self.nonce
            )));
        }
        let ms = elapsed.as_secs_f64() * 1e3;
        self.samples_ms.lock().unwrap().push(ms);
        self.counters.samples.fetch_add(1, Ordering::SeqCst);
        if elapsed > self.latency_bound {
            self.consecutive_over += 1;
            if self.consecutive_over >= self.consecutive_threshold {
                self.counters.latency_alarms.fetch_add(1, Ordering::SeqCst);
            }
        } else {
            self.consecutive_over = 0;
        }
        Ok(ms)
    }
}
