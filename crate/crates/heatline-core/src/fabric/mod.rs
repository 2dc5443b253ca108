//! In-process message fabric: the publish/subscribe bus, the simulated tag
//! server and the storage services. These stand in for the external broker,
//! gateway and databases behind the same contracts (ordered replayable
//! topics, typed tags, per-key-atomic stores).

mod bus;
mod stores;
mod tags;

pub use bus::{
    Bus, Message, Subscription, DEFAULT_RETENTION, STANDARD_TOPICS, TOPIC_NP_UPDATES,
    TOPIC_REFORMATTED, TOPIC_SNAPSHOTS, TOPIC_TELEMETRY, TOPIC_WH_UPDATES,
};
pub use stores::{
    ActiveAlgorithm, AlgorithmStore, CacheStore, ForgeCache, ForgeSensorsStore, LogEntry, LogKind,
    PowerConfigStore, TelemetryStore, VersionId,
};
pub use tags::{TagServer, TagUpdate, TagValue};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FabricError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{0}` already exists")]
    TopicExists(String),
    #[error("retention must be >= 1, got {0}")]
    InvalidRetention(usize),
    #[error("offset {requested} is beyond the next offset {next}")]
    OffsetBeyondEnd { requested: u64, next: u64 },
    #[error("offset {requested} is older than retention; earliest available is {earliest}")]
    Truncated { requested: u64, earliest: u64 },
    #[error("payload is not valid JSON: {0}")]
    BadPayload(String),
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("tag `{tag}` holds {expected}, refusing {got}")]
    TagTypeMismatch { tag: String, expected: &'static str, got: &'static str },
    #[error("tag server is offline")]
    TagServerOffline,
    #[error("injected write failure")]
    InjectedWriteFailure,
    #[error("algorithm version `{0}` not found")]
    VersionNotFound(String),
}
