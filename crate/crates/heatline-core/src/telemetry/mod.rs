//! Telemetry pipeline: parsing and reformatting, per-second state snapshots,
//! the tag-server-facing data-manager services and latency accounting.

mod data_manager;
mod latency;
mod parser;
mod record;
mod snapshot;

pub use data_manager::{
    ApplyResult, ConnectionCheck, ForgeDataRetriever, HeartbeatCounters, PowerUpdater,
    RetrieverCounters, RetryPolicy, UpdaterCounters, HEARTBEAT_TAG,
};
pub use latency::{
    LatencyReport, Stage, StageStats, DATA_MANAGER_BUDGET_MS, PARSER_BUDGET_MS,
    POWER_CONTROL_BUDGET_MS, REFERENCE_DEPLOYMENT_MEANS_MS,
};
pub use parser::{DeadLetterEntry, DeadLetterLog, ParserCounters, ParserService};
pub use record::{
    parse, power_tag, temperature_tag, voltage_tag, ParseRejection, RawTelemetry, RecordKind,
    RecordValue, TelemetryRecord, RAW_SCHEMA_VERSION, TAG_MATERIAL, TAG_MODE, TAG_ROD_POS,
    TAG_ROD_VEL,
};
pub use snapshot::{
    SnapshotBuilder, SnapshotOutcome, StateSnapshot, DEFAULT_COMPLETENESS_THRESHOLD,
    EXPECTED_FIELDS,
};
