//! The telemetry parser service: raw topic in, reformatted topic out,
//! malformed payloads quarantined to a dead-letter log. Nothing is dropped
//! silently: records in = records reformatted + dead-lettered.

use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::latency::StageStats;
use super::record::{parse, TelemetryRecord};
use crate::fabric::{Bus, LogKind, Message, TelemetryStore, TOPIC_REFORMATTED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetterEntry {
    pub reason: String,
    /// Original payload, lossily decoded for readability.
    pub payload: String,
    pub timestamp_ns: u64,
}

/// Quarantine for unparseable telemetry, exportable as NDJSON.
#[derive(Debug, Default)]
pub struct DeadLetterLog {
    entries: Mutex<Vec<DeadLetterEntry>>,
}

impl DeadLetterLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, entry: DeadLetterEntry) {
        self.entries.lock().unwrap().push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<DeadLetterEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn dump_ndjson<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for entry in self.entries.lock().unwrap().iter() {
            writeln!(writer, "{}", serde_json::to_string(entry)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ParserCounters {
    pub records_in: AtomicU64,
    pub reformatted: AtomicU64,
    pub dead_lettered: AtomicU64,
}

impl ParserCounters {
    pub fn conservation_holds(&self) -> bool {
        self.records_in.load(Ordering::SeqCst)
            == self.reformatted.load(Ordering::SeqCst) + self.dead_lettered.load(Ordering::SeqCst)
    }
}

/// Parses raw messages one at a time; per-tag timestamp regressions are
/// dead-lettered to keep the reformatted stream monotone per source.
pub struct ParserService {
    bus: Arc<Bus>,
    telemetry_store: Arc<TelemetryStore>,
    dead_letters: Arc<DeadLetterLog>,
    stats: Arc<StageStats>,
    counters: Arc<ParserCounters>,
    store_records: bool,
    last_ts_per_tag: HashMap<String, u64>,
}

impl ParserService {
    pub fn new(
        bus: Arc<Bus>,
        telemetry_store: Arc<TelemetryStore>,
        dead_letters: Arc<DeadLetterLog>,
        stats: Arc<StageStats>,
        counters: Arc<ParserCounters>,
        store_records: bool,
    ) -> Self {
        ParserService {
            bus,
            telemetry_store,
            dead_letters,
            stats,
            counters,
            store_records,
            last_ts_per_tag: HashMap::new(),
        }
    }

    /// Process one raw message end to end; returns the reformatted record
    /// when it parsed.
    pub fn process(&mut self, message: &Message) -> Option<TelemetryRecord> {
        let started = Instant::now();
        self.counters.records_in.fetch_add(1, Ordering::SeqCst);
        let result = parse(&message.payload).and_then(|record| {
            match self.last_ts_per_tag.get(&record.source_tag) {
                Some(prev) if record.timestamp_ns < *prev => {
                    Err(super::record::ParseRejection {
                        reason: format!(
                            "timestamp regression on `{}`: {} < {}",
                            record.source_tag, record.timestamp_ns, prev
                        ),
                    })
                }
                _ => {
                    self.last_ts_per_tag
                        .insert(record.source_tag.clone(), record.timestamp_ns);
                    Ok(record)
                }
            }
        });
        let out = match result {
            Ok(record) => {
                self.bus
                    .publish(TOPIC_REFORMATTED, record.to_bytes())
                    .expect("reformatted topic exists");
                if self.store_records {
                    self.telemetry_store.append(
                        LogKind::Record,
                        record.timestamp_ns,
                        serde_json::to_value(&record).expect("record serializes"),
                    );
                }
                self.counters.reformatted.fetch_add(1, Ordering::SeqCst);
                Some(record)
            }
            Err(rejection) => {
                self.dead_letters.push(DeadLetterEntry {
                    reason: rejection.reason,
                    payload: String::from_utf8_lossy(&message.payload).into_owned(),
                    timestamp_ns: message.timestamp_ns,
                });
                self.counters.dead_lettered.fetch_add(1, Ordering::SeqCst);
                None
            }
        };
        self.stats.record_ms(started.elapsed().as_secs_f64() * 1e3);
        out
    }
}
