//! Simulated plant tag server: strongly typed key-value tags with read,
//! write and per-tag subscriptions.
//!
//! A tag's type is fixed by its first write. Fault hooks (artificial delay,
//! injected write failures, offline mode) exist for latency and recovery
//! tests; they are inert unless armed.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::FabricError;
use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum TagValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl TagValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            TagValue::Int(_) => "int",
            TagValue::Float(_) => "float",
            TagValue::Bool(_) => "bool",
            TagValue::Str(_) => "string",
        }
    }

    fn same_type(&self, other: &TagValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TagValue::Int(i) => Some(*i as f64),
            TagValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            TagValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagUpdate {
    pub name: String,
    pub value: TagValue,
    pub timestamp_ns: u64,
}

struct TagState {
    value: TagValue,
    updated_ns: u64,
    subscribers: Vec<Sender<TagUpdate>>,
}

pub struct TagServer {
    tags: Mutex<HashMap<String, TagState>>,
    clock: Clock,
    delay_ns: AtomicU64,
    fail_writes: AtomicU32,
    offline: AtomicBool,
}

impl TagServer {
    pub fn new(clock: Clock) -> Self {
        TagServer {
            tags: Mutex::new(HashMap::new()),
            clock,
            delay_ns: AtomicU64::new(0),
            fail_writes: AtomicU32::new(0),
            offline: AtomicBool::new(false),
        }
    }

    fn apply_delay(&self) {
        let ns = self.delay_ns.load(Ordering::Relaxed);
        if ns > 0 {
            std::thread::sleep(Duration::from_nanos(ns));
        }
    }

    fn check_reachable(&self) -> Result<(), FabricError> {
        if self.offline.load(Ordering::SeqCst) {
            return Err(FabricError::TagServerOffline);
        }
        Ok(())
    }

    pub fn read(&self, name: &str) -> Result<(TagValue, u64), FabricError> {
        self.check_reachable()?;
        self.apply_delay();
        let tags = self.tags.lock().unwrap();
        tags.get(name)
            .map(|t| (t.value.clone(), t.updated_ns))
            .ok_or_else(|| FabricError::UnknownTag(name.to_string()))
    }

    /// Write a tag, creating it on first use with the written type. Later
    /// writes must keep the type.
    pub fn write(&self, name: &str, value: TagValue) -> Result<(), FabricError> {
        self.check_reachable()?;
        if self
            .fail_writes
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(FabricError::InjectedWriteFailure);
        }
        self.apply_delay();
        let now = self.clock.now_ns();
        let mut tags = self.tags.lock().unwrap();
        match tags.get_mut(name) {
            Some(state) => {
                if !state.value.same_type(&value) {
                    return Err(FabricError::TagTypeMismatch {
                        tag: name.to_string(),
                        expected: state.value.type_name(),
                        got: value.type_name(),
                    });
                }
                state.value = value.clone();
                state.updated_ns = now;
                let update = TagUpdate { name: name.to_string(), value, timestamp_ns: now };
                state.subscribers.retain(|tx| tx.send(update.clone()).is_ok());
            }
            None => {
                tags.insert(
                    name.to_string(),
                    TagState { value, updated_ns: now, subscribers: Vec::new() },
                );
            }
        }
        Ok(())
    }

    pub fn subscribe(&self, name: &str) -> Result<Receiver<TagUpdate>, FabricError> {
        self.check_reachable()?;
        let mut tags = self.tags.lock().unwrap();
        let state = tags
            .get_mut(name)
            .ok_or_else(|| FabricError::UnknownTag(name.to_string()))?;
        let (tx, rx) = crossbeam_channel::unbounded();
        state.subscribers.push(tx);
        Ok(rx)
    }

    /// Arm an artificial per-operation delay (the latency-injection hook).
    pub fn set_artificial_delay(&self, delay: Duration) {
        self.delay_ns.store(delay.as_nanos() as u64, Ordering::Relaxed);
    }

    /// Fail the next `n` writes with a transient error.
    pub fn inject_write_failures(&self, n: u32) {
        self.fail_writes.store(n, Ordering::SeqCst);
    }

    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }

    /// Full tag-server state as JSON, for fixtures and inspection.
    pub fn snapshot_json(&self) -> serde_json::Value {
        let tags = self.tags.lock().unwrap();
        let mut map = serde_json::Map::new();
        let mut names: Vec<&String> = tags.keys().collect();
        names.sort();
        for name in names {
            let state = &tags[name];
            map.insert(
                name.clone(),
                serde_json::json!({
                    "value": state.value,
                    "updated_ns": state.updated_ns,
                }),
            );
        }
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server() -> TagServer {
        TagServer::new(Clock::virtual_at(1_000))
    }

    #[test]
    fn read_your_write() {
        let s = server();
        s.write("Z3_voltage", TagValue::Int(250)).unwrap();
        let (v, ts) = s.read("Z3_voltage").unwrap();
        assert_eq!(v, TagValue::Int(250));
        assert_eq!(ts, 1_000);
    }

    #[test]
    fn type_is_fixed_by_first_write() {
        let s = server();
        s.write("t", TagValue::Int(1)).unwrap();
        let err = s.write("t", TagValue::Str("hot".into())).unwrap_err();
        assert!(matches!(err, FabricError::TagTypeMismatch { .. }));
        // Original value intact.
        assert_eq!(s.read("t").unwrap().0, TagValue::Int(1));
    }

    #[test]
    fn unknown_tag_read_errors() {
        assert!(matches!(server().read("nope"), Err(FabricError::UnknownTag(_))));
    }

    #[test]
    fn every_write_bumps_timestamp_and_notifies() {
        let clock = Clock::virtual_at(0);
        let s = TagServer::new(clock.clone());
        s.write("hb", TagValue::Int(0)).unwrap();
        let rx = s.subscribe("hb").unwrap();
        clock.advance_ns(5);
        s.write("hb", TagValue::Int(1)).unwrap();
        let update = rx.try_recv().unwrap();
        assert_eq!(update.value, TagValue::Int(1));
        assert_eq!(update.timestamp_ns, 5);
    }

    #[test]
    fn injected_failures_are_transient() {
        let s = server();
        s.write("v", TagValue::Int(1)).unwrap();
        s.inject_write_failures(2);
        assert!(s.write("v", TagValue::Int(2)).is_err());
        assert!(s.write("v", TagValue::Int(2)).is_err());
        s.write("v", TagValue::Int(2)).unwrap();
        assert_eq!(s.read("v").unwrap().0, TagValue::Int(2));
    }

    #[test]
    fn offline_server_rejects_everything() {
        let s = server();
        s.write("v", TagValue::Int(1)).unwrap();
        s.set_offline(true);
        assert!(matches!(s.read("v"), Err(FabricError::TagServerOffline)));
        assert!(matches!(s.write("v", TagValue::Int(2)), Err(FabricError::TagServerOffline)));
        s.set_offline(false);
        assert!(s.read("v").is_ok());
    }

    #[test]
    fn snapshot_lists_tags_with_timestamps() {
        let s = server();
        s.write("a", TagValue::Float(1.5)).unwrap();
        s.write("b", TagValue::Bool(true)).unwrap();
        let snap = s.snapshot_json();
        assert_eq!(snap["a"]["value"]["value"], 1.5);
        assert_eq!(snap["b"]["value"]["value"], true);
    }
}
