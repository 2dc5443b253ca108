//! End-to-end pipeline runner: a synthetic telemetry generator driven by a
//! twin, the parser, the snapshot builder, both decision managers, the
//! power updater, the forge data retriever and the heartbeat check, all on
//! the in-process fabric.
//!
//! The loop is closed: accepted voltage updates land on the tag server, the
//! generator's twin follows the commanded voltages, and the next telemetry
//! sweep reflects them.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::fabric::{
    ActiveAlgorithm, AlgorithmStore, Bus, CacheStore, ForgeSensorsStore, PowerConfigStore,
    TagServer, TagValue, TelemetryStore, VersionId, TOPIC_NP_UPDATES, TOPIC_REFORMATTED,
    TOPIC_SNAPSHOTS, TOPIC_TELEMETRY, TOPIC_WH_UPDATES,
};
use crate::power::{
    DecisionOutcome, NpManager, PowerPolicy, PowerUpdate, SanityLimits, WhManager, WrappedModel,
};
use crate::telemetry::{
    ConnectionCheck, DeadLetterLog, ForgeDataRetriever, LatencyReport, ParserCounters,
    ParserService, PowerUpdater, RawTelemetry, RetryPolicy, SnapshotBuilder, SnapshotOutcome,
    Stage, StageStats, StateSnapshot, UpdaterCounters, DATA_MANAGER_BUDGET_MS,
    DEFAULT_COMPLETENESS_THRESHOLD, PARSER_BUDGET_MS, POWER_CONTROL_BUDGET_MS, TAG_MATERIAL,
    TAG_MODE, TAG_ROD_POS, TAG_ROD_VEL,
};
use crate::twin::{Mode, Rod, Twin, TwinConfig};
use crate::ZONE_COUNT;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("twin setup failed: {0}")]
    Twin(#[from] crate::twin::TwinError),
    #[error("fabric error: {0}")]
    Fabric(#[from] crate::fabric::FabricError),
    #[error("power control error: {0}")]
    Power(#[from] crate::power::PowerError),
}

/// Identity of the built-in rule-based warmholding manager.
pub const WH_RULE_MANAGER: &str = "warmholding-rule";
pub const WH_RULE_VERSION: &str = "builtin-warmholding-rule-v1";
/// Placeholder before any model is deployed for a mode.
pub const UNSET_MANAGER: &str = "unset";

/// Everything the services share, standing in for the external brokers,
/// gateway and databases.
pub struct Fabric {
    pub clock: Clock,
    pub bus: Arc<Bus>,
    pub tags: Arc<TagServer>,
    pub cache: Arc<CacheStore>,
    pub telemetry_store: Arc<TelemetryStore>,
    pub algorithms: Arc<AlgorithmStore>,
    pub power_config: Arc<PowerConfigStore>,
    pub forge: Arc<ForgeSensorsStore>,
}

impl Fabric {
    pub fn new(clock: Clock) -> Self {
        Fabric {
            bus: Arc::new(Bus::with_standard_topics(clock.clone())),
            tags: Arc::new(TagServer::new(clock.clone())),
            cache: Arc::new(CacheStore::new()),
            telemetry_store: Arc::new(TelemetryStore::new()),
            algorithms: Arc::new(AlgorithmStore::new()),
            power_config: Arc::new(PowerConfigStore::new(
                ActiveAlgorithm {
                    manager: UNSET_MANAGER.to_string(),
                    version: VersionId(UNSET_MANAGER.to_string()),
                },
                ActiveAlgorithm {
                    manager: WH_RULE_MANAGER.to_string(),
                    version: VersionId(WH_RULE_VERSION.to_string()),
                },
            )),
            forge: Arc::new(ForgeSensorsStore::new()),
            clock,
        }
    }

    /// Deploy a wrapped model: store the bundle and activate it for normal
    /// production. Returns the content-addressed version id.
    pub fn deploy_np_model(&self, model: &WrappedModel, manager: &str) -> VersionId {
        let version = self.algorithms.put(model.to_bundle_json());
        self.power_config
            .set(Mode::NormalProduction, manager, version.clone());
        version
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub rate_per_s: u32,
    pub duration: Duration,
    pub completeness_threshold: f64,
    pub twin: TwinConfig,
    pub rod: Rod,
    pub power_policy: PowerPolicy,
    pub sanity_limits: SanityLimits,
    pub staleness_bound_ns: u64,
    pub retriever_period: Duration,
    pub heartbeat_period: Duration,
    /// Artificial tag-operation delay, the latency-injection hook.
    pub tag_delay: Option<Duration>,
    pub drain_timeout: Duration,
}

impl PipelineConfig {
    pub fn new(rate_per_s: u32, duration: Duration) -> Self {
        let twin = TwinConfig::default();
        let rod = Rod::new("line-rod", 25.0, 30.0, 0.25, 1150.0).expect("valid rod");
        PipelineConfig {
            rate_per_s,
            duration,
            completeness_threshold: DEFAULT_COMPLETENESS_THRESHOLD,
            twin,
            rod,
            power_policy: PowerPolicy::default(),
            sanity_limits: SanityLimits::default(),
            staleness_bound_ns: crate::power::DEFAULT_STALENESS_BOUND_NS,
            retriever_period: Duration::from_secs(1),
            heartbeat_period: Duration::from_millis(500),
            tag_delay: None,
            drain_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub generated: u64,
    pub parsed: u64,
    pub dead_lettered: u64,
    pub windows_closed: u64,
    pub snapshots_published: u64,
    pub snapshots_incomplete: u64,
    pub late_records: u64,
    pub np_updates_published: u64,
    pub np_skipped: u64,
    pub np_rejected: u64,
    pub wh_updates_published: u64,
    pub wh_skipped: u64,
    pub wh_rejected: u64,
    pub updates_applied: u64,
    pub updates_ignored_inactive_mode: u64,
    pub updater_alarms: u64,
    pub forge_refreshes: u64,
    pub heartbeat_samples: u64,
}

impl PipelineCounts {
    /// The no-loss accounting identities.
    pub fn conservation_ok(&self) -> bool {
        let parse_ok = self.generated == self.parsed + self.dead_lettered;
        let window_ok =
            self.windows_closed == self.snapshots_published + self.snapshots_incomplete;
        let decide_ok = self.np_updates_published + self.np_skipped + self.np_rejected
            == self.snapshots_published;
        parse_ok && window_ok && decide_ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub latency: Vec<LatencyReport>,
    pub counts: PipelineCounts,
    pub conservation_ok: bool,
    /// All queues empty within the drain timeout after the generator ended.
    pub drained: bool,
    pub duration_s: f64,
    /// (np topic offset, algorithm version) per published update.
    pub np_update_versions: Vec<(u64, String)>,
}

impl PipelineReport {
    pub fn budgets_pass(&self) -> bool {
        self.latency.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

pub struct RunningPipeline {
    stop: Arc<AtomicBool>,
    generator_done: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
    started: Instant,
    drain_timeout: Duration,

    fabric_counts: FabricCounters,
    np_manager: Arc<NpManager>,
    algorithms: Arc<AlgorithmStore>,
    power_config: Arc<PowerConfigStore>,
    parser_stats: Arc<StageStats>,
    control_stats: Arc<StageStats>,
    updater_stats: Arc<StageStats>,
    pub dead_letters: Arc<DeadLetterLog>,
    np_versions: Arc<Mutex<Vec<(u64, String)>>>,
}

/// Shared atomic counters across service threads.
#[derive(Clone)]
struct FabricCounters {
    generated: Arc<AtomicU64>,
    parser: Arc<ParserCounters>,
    windows_closed: Arc<AtomicU64>,
    snapshots_published: Arc<AtomicU64>,
    snapshots_incomplete: Arc<AtomicU64>,
    late_records: Arc<AtomicU64>,
    np_consumed: Arc<AtomicU64>,
    wh_consumed: Arc<AtomicU64>,
    np_published: Arc<AtomicU64>,
    wh_published: Arc<AtomicU64>,
    np_skipped: Arc<AtomicU64>,
    np_rejected: Arc<AtomicU64>,
    wh_skipped: Arc<AtomicU64>,
    wh_rejected: Arc<AtomicU64>,
    updater: Arc<UpdaterCounters>,
    updater_consumed: Arc<AtomicU64>,
    forge_refreshes: Arc<AtomicU64>,
    heartbeat_samples: Arc<AtomicU64>,
}

impl FabricCounters {
    fn new() -> Self {
        FabricCounters {
            generated: Arc::new(AtomicU64::new(0)),
            parser: Arc::new(ParserCounters::default()),
            windows_closed: Arc::new(AtomicU64::new(0)),
            snapshots_published: Arc::new(AtomicU64::new(0)),
            snapshots_incomplete: Arc::new(AtomicU64::new(0)),
            late_records: Arc::new(AtomicU64::new(0)),
            np_consumed: Arc::new(AtomicU64::new(0)),
            wh_consumed: Arc::new(AtomicU64::new(0)),
            np_published: Arc::new(AtomicU64::new(0)),
            wh_published: Arc::new(AtomicU64::new(0)),
            np_skipped: Arc::new(AtomicU64::new(0)),
            np_rejected: Arc::new(AtomicU64::new(0)),
            wh_skipped: Arc::new(AtomicU64::new(0)),
            wh_rejected: Arc::new(AtomicU64::new(0)),
            updater: Arc::new(UpdaterCounters::default()),
            updater_consumed: Arc::new(AtomicU64::new(0)),
            forge_refreshes: Arc::new(AtomicU64::new(0)),
            heartbeat_samples: Arc::new(AtomicU64::new(0)),
        }
    }
}

pub struct Pipeline;

impl Pipeline {
    /// Run the full chain for the configured duration and block until it
    /// drains.
    pub fn run(
        config: PipelineConfig,
        fabric: &Fabric,
        np_version: &VersionId,
    ) -> Result<PipelineReport, PipelineError> {
        Ok(Self::start(config, fabric, np_version)?.wait())
    }

    /// Spawn every service; the caller may hot-swap versions mid-run and
    /// must call [`RunningPipeline::wait`].
    pub fn start(
        config: PipelineConfig,
        fabric: &Fabric,
        np_version: &VersionId,
    ) -> Result<RunningPipeline, PipelineError> {
        let bundle = fabric.algorithms.get(np_version)?;
        let model = WrappedModel::from_bundle_json(&bundle)?;
        if let Some(delay) = config.tag_delay {
            fabric.tags.set_artificial_delay(delay);
        }

        let counts = FabricCounters::new();
        let stop = Arc::new(AtomicBool::new(false));
        let generator_done = Arc::new(AtomicBool::new(false));
        let parser_stats = Arc::new(StageStats::new());
        let control_stats = Arc::new(StageStats::new());
        let updater_stats = Arc::new(StageStats::new());
        let dead_letters = Arc::new(DeadLetterLog::new());
        let np_versions: Arc<Mutex<Vec<(u64, String)>>> = Arc::new(Mutex::new(Vec::new()));

        let twin = Twin::new(config.twin.clone(), vec![config.rod.clone()])?;

        // Bootstrap the plant-side tags and prime the forge cache so the
        // first decisions have voltages to convert against.
        bootstrap_tags(&fabric.tags, &twin)?;
        let retriever = ForgeDataRetriever::new(
            fabric.tags.clone(),
            fabric.forge.clone(),
            fabric.clock.clone(),
        );
        retriever.poll_once()?;

        let np_manager = Arc::new(NpManager::new(
            "np-drl",
            np_version.clone(),
            model,
            config.power_policy,
            config.sanity_limits,
            config.staleness_bound_ns,
            fabric.clock.clone(),
        ));
        fabric
            .power_config
            .set(Mode::NormalProduction, np_manager.id(), np_version.clone());
        let wh_manager = Arc::new(WhManager::new(
            WH_RULE_MANAGER,
            VersionId(WH_RULE_VERSION.to_string()),
            config.twin.zone_temp_bands,
            config.power_policy,
            config.sanity_limits,
            fabric.clock.clone(),
        ));

        let mut handles = Vec::new();

        // Generator: paced sweeps of raw telemetry, twin stepped about once
        // per simulated second, voltage commands read back from the tags.
        {
            let bus = fabric.bus.clone();
            let tags = fabric.tags.clone();
            let clock = fabric.clock.clone();
            let stop = stop.clone();
            let done = generator_done.clone();
            let generated = counts.generated.clone();
            let cfg = config.clone();
            let mut twin = twin;
            handles.push(std::thread::spawn(move || {
                generator_loop(&cfg, &bus, &tags, &clock, &stop, &generated, &mut twin);
                done.store(true, Ordering::SeqCst);
            }));
        }

        // Parser.
        {
            let mut sub = fabric.bus.subscribe(TOPIC_TELEMETRY, 0)?;
            let mut parser = ParserService::new(
                fabric.bus.clone(),
                fabric.telemetry_store.clone(),
                dead_letters.clone(),
                parser_stats.clone(),
                counts.parser.clone(),
                false,
            );
            let stop = stop.clone();
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    if let Some(msg) = sub.recv_timeout(Duration::from_millis(20)) {
                        parser.process(&msg);
                        while let Some(msg) = sub.try_recv() {
                            parser.process(&msg);
                        }
                    }
                }
            }));
        }

        // Snapshot builder.
        {
            let mut sub = fabric.bus.subscribe(TOPIC_REFORMATTED, 0)?;
            let bus = fabric.bus.clone();
            let mut builder = SnapshotBuilder::new(
                config.completeness_threshold,
                fabric.telemetry_store.clone(),
                fabric.cache.clone(),
                fabric.forge.clone(),
            );
            let stop = stop.clone();
            let counts = counts.clone();
            handles.push(std::thread::spawn(move || {
                let publish_outcome = |outcome: SnapshotOutcome, bus: &Bus| match outcome {
                    SnapshotOutcome::Published(snapshot) => {
                        counts.windows_closed.fetch_add(1, Ordering::SeqCst);
                        counts.snapshots_published.fetch_add(1, Ordering::SeqCst);
                        bus.publish(TOPIC_SNAPSHOTS, snapshot.to_bytes())
                            .expect("snapshots topic exists");
                    }
                    SnapshotOutcome::Incomplete { .. } => {
                        counts.windows_closed.fetch_add(1, Ordering::SeqCst);
                        counts.snapshots_incomplete.fetch_add(1, Ordering::SeqCst);
                    }
                };
                while !stop.load(Ordering::SeqCst) {
                    if let Some(msg) = sub.recv_timeout(Duration::from_millis(20)) {
                        let mut feed = |msg: crate::fabric::Message| {
                            if let Ok(record) = serde_json::from_slice(&msg.payload) {
                                if let Some(outcome) = builder.ingest(&record) {
                                    publish_outcome(outcome, &bus);
                                }
                            }
                        };
                        feed(msg);
                        while let Some(msg) = sub.try_recv() {
                            feed(msg);
                        }
                    }
                }
                counts.late_records.store(builder.late_records(), Ordering::SeqCst);
            }));
        }

        // Normal-production manager.
        {
            let mut sub = fabric.bus.subscribe(TOPIC_SNAPSHOTS, 0)?;
            let bus = fabric.bus.clone();
            let forge = fabric.forge.clone();
            let manager = np_manager.clone();
            let stats = control_stats.clone();
            let stop = stop.clone();
            let counts = counts.clone();
            let versions = np_versions.clone();
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    while let Some(msg) = sub.recv_timeout(Duration::from_millis(20)) {
                        if let Ok(snapshot) = StateSnapshot::from_bytes(&msg.payload) {
                            counts.np_consumed.fetch_add(1, Ordering::SeqCst);
                            let started = Instant::now();
                            let outcome = manager.decide(&snapshot, &forge);
                            stats.record_ms(started.elapsed().as_secs_f64() * 1e3);
                            match outcome {
                                DecisionOutcome::Update(update) => {
                                    let offset = bus
                                        .publish(
                                            TOPIC_NP_UPDATES,
                                            serde_json::to_vec(&update).unwrap(),
                                        )
                                        .expect("np topic exists");
                                    counts.np_published.fetch_add(1, Ordering::SeqCst);
                                    versions
                                        .lock()
                                        .unwrap()
                                        .push((offset, update.provenance.algorithm_version));
                                }
                                DecisionOutcome::Skipped(_) => {
                                    counts.np_skipped.fetch_add(1, Ordering::SeqCst);
                                }
                                DecisionOutcome::Rejected { .. } => {
                                    counts.np_rejected.fetch_add(1, Ordering::SeqCst);
                                }
                            }
                        }
                    }
                }
            }));
        }

        // Warmholding manager (rule stub behind the same topology).
        {
            let mut sub = fabric.bus.subscribe(TOPIC_SNAPSHOTS, 0)?;
            let bus = fabric.bus.clone();
            let forge = fabric.forge.clone();
            let manager = wh_manager;
            let stats = control_stats.clone();
            let stop = stop.clone();
            let counts = counts.clone();
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    while let Some(msg) = sub.recv_timeout(Duration::from_millis(20)) {
                        if let Ok(snapshot) = StateSnapshot::from_bytes(&msg.payload) {
                            counts.wh_consumed.fetch_add(1, Ordering::SeqCst);
                            let started = Instant::now();
                            let outcome = manager.decide(&snapshot, &forge);
                            stats.record_ms(started.elapsed().as_secs_f64() * 1e3);
                            match outcome {
                                DecisionOutcome::Update(update) => {
                                    bus.publish(
                                        TOPIC_WH_UPDATES,
                                        serde_json::to_vec(&update).unwrap(),
                                    )
                                    .expect("wh topic exists");
                                    counts.wh_published.fetch_add(1, Ordering::SeqCst);
                                }
                                DecisionOutcome::Skipped(_) => {
                                    counts.wh_skipped.fetch_add(1, Ordering::SeqCst);
                                }
                                DecisionOutcome::Rejected { .. } => {
                                    counts.wh_rejected.fetch_add(1, Ordering::SeqCst);
                                }
                            }
                        }
                    }
                }
            }));
        }

        // Power updater, subscribed to both update topics.
        {
            let mut np_sub = fabric.bus.subscribe(TOPIC_NP_UPDATES, 0)?;
            let mut wh_sub = fabric.bus.subscribe(TOPIC_WH_UPDATES, 0)?;
            let updater = PowerUpdater::new(
                fabric.tags.clone(),
                fabric.forge.clone(),
                RetryPolicy::default(),
                counts.updater.clone(),
                updater_stats.clone(),
            );
            let stop = stop.clone();
            let consumed = counts.updater_consumed.clone();
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let mut idle = true;
                    while let Some(msg) = np_sub.try_recv() {
                        idle = false;
                        if let Ok(update) = serde_json::from_slice::<PowerUpdate>(&msg.payload) {
                            consumed.fetch_add(1, Ordering::SeqCst);
                            updater.apply(&update, Mode::NormalProduction);
                        }
                    }
                    while let Some(msg) = wh_sub.try_recv() {
                        idle = false;
                        if let Ok(update) = serde_json::from_slice::<PowerUpdate>(&msg.payload) {
                            consumed.fetch_add(1, Ordering::SeqCst);
                            updater.apply(&update, Mode::Warmholding);
                        }
                    }
                    if idle {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                }
            }));
        }

        // Forge data retriever.
        {
            let stop = stop.clone();
            let refreshes = counts.forge_refreshes.clone();
            let period = config.retriever_period;
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    if retriever.poll_once().is_ok() {
                        refreshes.fetch_add(1, Ordering::SeqCst);
                    }
                    std::thread::sleep(period);
                }
            }));
        }

        // Heartbeat connection check.
        {
            let mut check = ConnectionCheck::new(
                fabric.tags.clone(),
                Duration::from_millis(250),
                3,
            );
            let stop = stop.clone();
            let samples = counts.heartbeat_samples.clone();
            let period = config.heartbeat_period;
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    if check.check_once().is_ok() {
                        samples.fetch_add(1, Ordering::SeqCst);
                    }
                    std::thread::sleep(period);
                }
            }));
        }

        Ok(RunningPipeline {
            stop,
            generator_done,
            handles,
            started: Instant::now(),
            drain_timeout: config.drain_timeout,
            fabric_counts: counts,
            np_manager,
            algorithms: fabric.algorithms.clone(),
            power_config: fabric.power_config.clone(),
            parser_stats,
            control_stats,
            updater_stats,
            dead_letters,
            np_versions,
        })
    }
}

impl RunningPipeline {
    /// Swap the normal-production algorithm without restarting anything.
    pub fn hot_swap_np(&self, version: &VersionId) -> Result<(), crate::power::PowerError> {
        self.np_manager.hot_swap(&self.algorithms, version)?;
        self.power_config
            .set(Mode::NormalProduction, self.np_manager.id(), version.clone());
        Ok(())
    }

    pub fn active_np_version(&self) -> VersionId {
        self.np_manager.active_version()
    }

    /// Block until the generator finishes, the queues drain and every
    /// service joins; then assemble the report.
    pub fn wait(self) -> PipelineReport {
        while !self.generator_done.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(20));
        }
        let drained = self.wait_for_drain();
        self.stop.store(true, Ordering::SeqCst);
        for handle in self.handles {
            let _ = handle.join();
        }
        let c = &self.fabric_counts;
        let counts = PipelineCounts {
            generated: c.generated.load(Ordering::SeqCst),
            parsed: c.parser.reformatted.load(Ordering::SeqCst),
            dead_lettered: c.parser.dead_lettered.load(Ordering::SeqCst),
            windows_closed: c.windows_closed.load(Ordering::SeqCst),
            snapshots_published: c.snapshots_published.load(Ordering::SeqCst),
            snapshots_incomplete: c.snapshots_incomplete.load(Ordering::SeqCst),
            late_records: c.late_records.load(Ordering::SeqCst),
            np_updates_published: c.np_published.load(Ordering::SeqCst),
            np_skipped: c.np_skipped.load(Ordering::SeqCst),
            np_rejected: c.np_rejected.load(Ordering::SeqCst),
            wh_updates_published: c.wh_published.load(Ordering::SeqCst),
            wh_skipped: c.wh_skipped.load(Ordering::SeqCst),
            wh_rejected: c.wh_rejected.load(Ordering::SeqCst),
            updates_applied: c.updater.applied.load(Ordering::SeqCst),
            updates_ignored_inactive_mode: c
                .updater
                .ignored_inactive_mode
                .load(Ordering::SeqCst),
            updater_alarms: c.updater.alarms.load(Ordering::SeqCst),
            forge_refreshes: c.forge_refreshes.load(Ordering::SeqCst),
            heartbeat_samples: c.heartbeat_samples.load(Ordering::SeqCst),
        };
        let latency = vec![
            self.parser_stats.report(Stage::TelemetryParser, PARSER_BUDGET_MS),
            self.control_stats.report(Stage::PowerControl, POWER_CONTROL_BUDGET_MS),
            self.updater_stats.report(Stage::DataManager, DATA_MANAGER_BUDGET_MS),
        ];
        PipelineReport {
            conservation_ok: counts.conservation_ok(),
            drained,
            duration_s: self.started.elapsed().as_secs_f64(),
            counts,
            latency,
            np_update_versions: self.np_versions.lock().unwrap().clone(),
        }
    }

    fn wait_for_drain(&self) -> bool {
        let deadline = Instant::now() + self.drain_timeout;
        let c = &self.fabric_counts;
        while Instant::now() < deadline {
            let generated = c.generated.load(Ordering::SeqCst);
            let parsed_total = c.parser.reformatted.load(Ordering::SeqCst)
                + c.parser.dead_lettered.load(Ordering::SeqCst);
            let published = c.snapshots_published.load(Ordering::SeqCst);
            let np_done = c.np_consumed.load(Ordering::SeqCst) >= published;
            let wh_done = c.wh_consumed.load(Ordering::SeqCst) >= published;
            let updates = c.np_published.load(Ordering::SeqCst)
                + c.wh_published.load(Ordering::SeqCst);
            let updater_done = c.updater_consumed.load(Ordering::SeqCst) >= updates;
            if parsed_total == generated && np_done && wh_done && updater_done {
                return true;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        false
    }
}

fn bootstrap_tags(tags: &TagServer, twin: &Twin) -> Result<(), crate::fabric::FabricError> {
    let state = twin.state();
    for zone in 0..ZONE_COUNT {
        tags.write(
            &crate::telemetry::voltage_tag(zone),
            TagValue::Int(state.zone_voltages[zone].round() as i64),
        )?;
    }
    tags.write(TAG_MODE, TagValue::Str(state.mode.as_str().to_string()))?;
    tags.write(TAG_MATERIAL, TagValue::Str(state.material_id.clone()))?;
    Ok(())
}

/// One full sensor sweep of raw telemetry for the twin's current state.
fn build_sweep(twin: &Twin, now_ns: u64) -> Vec<RawTelemetry> {
    let config = twin.config();
    let state = twin.state();
    let mut sweep = Vec::with_capacity(27);
    let temps = twin.sense_at(&config.sensor_positions_forge);
    let mut sensor = 0usize;
    for zone in 0..ZONE_COUNT {
        for i in 0..crate::twin::FORGE_SENSORS_PER_ZONE[zone] {
            sweep.push(RawTelemetry::number(
                crate::telemetry::temperature_tag(zone, i),
                temps[sensor],
                now_ns,
            ));
            sensor += 1;
        }
    }
    for zone in 0..ZONE_COUNT {
        sweep.push(RawTelemetry::number(
            crate::telemetry::power_tag(zone),
            state.zone_powers[zone],
            now_ns,
        ));
    }
    if let Some(rod) = state.rods.first() {
        sweep.push(RawTelemetry::number(TAG_ROD_POS, rod.front_position, now_ns));
    }
    sweep.push(RawTelemetry::number(TAG_ROD_VEL, config.rod_velocity, now_ns));
    sweep.push(RawTelemetry::text(TAG_MODE, state.mode.as_str(), now_ns));
    sweep.push(RawTelemetry::text(TAG_MATERIAL, &state.material_id, now_ns));
    sweep
}

fn generator_loop(
    config: &PipelineConfig,
    bus: &Bus,
    tags: &TagServer,
    clock: &Clock,
    stop: &AtomicBool,
    generated: &AtomicU64,
    twin: &mut Twin,
) {
    if config.rate_per_s == 0 {
        // Nothing to generate; idle out the configured duration.
        let end = Instant::now() + config.duration;
        while Instant::now() < end && !stop.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(10));
        }
        return;
    }
    let interval = Duration::from_secs_f64(1.0 / f64::from(config.rate_per_s));
    let step_every = Duration::from_secs_f64(twin.config().step_seconds);
    let started = Instant::now();
    let mut last_step = Instant::now();
    let mut sweep = build_sweep(twin, clock.now_ns());
    let mut cursor = 0usize;
    // Deadline pacing: sleep only the remainder to the next emission slot so
    // the realized rate tracks the target despite sleep granularity.
    let mut next_emit = Instant::now();
    while started.elapsed() < config.duration && !stop.load(Ordering::SeqCst) {
        if cursor >= sweep.len() {
            if last_step.elapsed() >= step_every {
                follow_voltage_commands(twin, tags);
                twin.step(None);
                last_step = Instant::now();
            }
            sweep = build_sweep(twin, clock.now_ns());
            cursor = 0;
        }
        let mut raw = sweep[cursor].clone();
        raw.ts = clock.now_ns();
        if bus.publish(TOPIC_TELEMETRY, raw.to_bytes()).is_ok() {
            generated.fetch_add(1, Ordering::SeqCst);
        }
        cursor += 1;
        next_emit += interval;
        if let Some(wait) = next_emit.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

/// Close the loop: the plant follows voltage commands written to the tags.
fn follow_voltage_commands(twin: &mut Twin, tags: &TagServer) {
    for zone in 0..ZONE_COUNT {
        if let Ok((value, _)) = tags.read(&crate::telemetry::voltage_tag(zone)) {
            if let Some(v) = value.as_f64() {
                if (v - twin.state().zone_voltages[zone]).abs() >= 1.0 {
                    twin.apply_voltage_command(zone, v);
                }
            }
        }
    }
}
