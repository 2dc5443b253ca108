//! In-process publish/subscribe bus with named topics, dense per-topic
//! offsets, bounded retention and replay.
//!
//! Every subscriber sees the full ordered stream exactly once: subscription
//! snapshots the retained backlog and registers the live channel under the
//! same lock, so nothing published in between can be missed or duplicated.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::FabricError;
use crate::clock::Clock;

pub const TOPIC_TELEMETRY: &str = "telemetry";
pub const TOPIC_REFORMATTED: &str = "reformatted_telemetry";
pub const TOPIC_SNAPSHOTS: &str = "state_snapshots";
pub const TOPIC_NP_UPDATES: &str = "np_power_updates";
pub const TOPIC_WH_UPDATES: &str = "wh_power_updates";

pub const STANDARD_TOPICS: [&str; 5] = [
    TOPIC_TELEMETRY,
    TOPIC_REFORMATTED,
    TOPIC_SNAPSHOTS,
    TOPIC_NP_UPDATES,
    TOPIC_WH_UPDATES,
];

pub const DEFAULT_RETENTION: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub offset: u64,
    pub timestamp_ns: u64,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn payload_json(&self) -> Result<serde_json::Value, serde_json::Error> {
        serde_json::from_slice(&self.payload)
    }
}

struct TopicState {
    retention: usize,
    next_offset: u64,
    earliest: u64,
    buffer: VecDeque<Message>,
    subscribers: Vec<Sender<Message>>,
}

impl TopicState {
    fn new(retention: usize) -> Self {
        TopicState {
            retention,
            next_offset: 0,
            earliest: 0,
            buffer: VecDeque::new(),
            subscribers: Vec::new(),
        }
    }
}

pub struct Bus {
    topics: Mutex<HashMap<String, TopicState>>,
    clock: Clock,
}

impl Bus {
    pub fn new(clock: Clock) -> Self {
        Bus { topics: Mutex::new(HashMap::new()), clock }
    }

    /// A bus with the five canonical pipeline topics registered.
    pub fn with_standard_topics(clock: Clock) -> Self {
        let bus = Bus::new(clock);
        for name in STANDARD_TOPICS {
            bus.create_topic(name, DEFAULT_RETENTION).expect("fresh bus");
        }
        bus
    }

    pub fn create_topic(&self, name: &str, retention: usize) -> Result<(), FabricError> {
        if retention < 1 {
            return Err(FabricError::InvalidRetention(retention));
        }
        let mut topics = self.topics.lock().unwrap();
        if topics.contains_key(name) {
            return Err(FabricError::TopicExists(name.to_string()));
        }
        topics.insert(name.to_string(), TopicState::new(retention));
        Ok(())
    }

    pub fn publish(&self, topic: &str, payload: Vec<u8>) -> Result<u64, FabricError> {
        let mut topics = self.topics.lock().unwrap();
        let state = topics
            .get_mut(topic)
            .ok_or_else(|| FabricError::UnknownTopic(topic.to_string()))?;
        let message = Message {
            offset: state.next_offset,
            timestamp_ns: self.clock.now_ns(),
            payload,
        };
        state.next_offset += 1;
        state.buffer.push_back(message.clone());
        while state.buffer.len() > state.retention {
            state.buffer.pop_front();
            state.earliest += 1;
        }
        state.subscribers.retain(|tx| tx.send(message.clone()).is_ok());
        Ok(message.offset)
    }

    /// Replay retained messages from `from_offset`, then deliver live ones.
    pub fn subscribe(&self, topic: &str, from_offset: u64) -> Result<Subscription, FabricError> {
        let mut topics = self.topics.lock().unwrap();
        let state = topics
            .get_mut(topic)
            .ok_or_else(|| FabricError::UnknownTopic(topic.to_string()))?;
        if from_offset > state.next_offset {
            return Err(FabricError::OffsetBeyondEnd { requested: from_offset, next: state.next_offset });
        }
        if from_offset < state.earliest {
            return Err(FabricError::Truncated { requested: from_offset, earliest: state.earliest });
        }
        let replay: VecDeque<Message> = state
            .buffer
            .iter()
            .filter(|m| m.offset >= from_offset)
            .cloned()
            .collect();
        let (tx, rx) = crossbeam_channel::unbounded();
        state.subscribers.push(tx);
        Ok(Subscription { replay, live: rx })
    }

    pub fn next_offset(&self, topic: &str) -> Result<u64, FabricError> {
        let topics = self.topics.lock().unwrap();
        topics
            .get(topic)
            .map(|t| t.next_offset)
            .ok_or_else(|| FabricError::UnknownTopic(topic.to_string()))
    }

    /// Earliest offset still retained.
    pub fn earliest_offset(&self, topic: &str) -> Result<u64, FabricError> {
        let topics = self.topics.lock().unwrap();
        topics
            .get(topic)
            .map(|t| t.earliest)
            .ok_or_else(|| FabricError::UnknownTopic(topic.to_string()))
    }

    /// Dump retained messages as newline-delimited JSON. Payloads must be
    /// valid JSON (all built-in record types are).
    pub fn dump_ndjson(&self, topic: &str) -> Result<String, FabricError> {
        let topics = self.topics.lock().unwrap();
        let state = topics
            .get(topic)
            .ok_or_else(|| FabricError::UnknownTopic(topic.to_string()))?;
        let mut out = String::new();
        for msg in &state.buffer {
            let payload = msg
                .payload_json()
                .map_err(|e| FabricError::BadPayload(format!("offset {}: {e}", msg.offset)))?;
            let line = serde_json::json!({
                "offset": msg.offset,
                "timestamp_ns": msg.timestamp_ns,
                "payload": payload,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    /// Load a fixture dumped by [`Bus::dump_ndjson`] into a fresh topic,
    /// preserving offsets.
    pub fn load_ndjson(&self, topic: &str, text: &str, retention: usize) -> Result<(), FabricError> {
        let mut parsed: Vec<Message> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let value: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| FabricError::BadPayload(e.to_string()))?;
            let offset = value["offset"].as_u64().ok_or_else(|| {
                FabricError::BadPayload("missing offset".to_string())
            })?;
            let timestamp_ns = value["timestamp_ns"].as_u64().unwrap_or(0);
            let payload = value["payload"].to_string().into_bytes();
            parsed.push(Message { offset, timestamp_ns, payload });
        }
        parsed.sort_by_key(|m| m.offset);
        let mut topics = self.topics.lock().unwrap();
        if topics.contains_key(topic) {
            return Err(FabricError::TopicExists(topic.to_string()));
        }
        let mut state = TopicState::new(retention);
        state.earliest = parsed.first().map(|m| m.offset).unwrap_or(0);
        state.next_offset = parsed.last().map(|m| m.offset + 1).unwrap_or(0);
        state.buffer = parsed.into();
        topics.insert(topic.to_string(), state);
        Ok(())
    }
}

/// One subscriber's view of a topic: pending replay, then the live feed.
pub struct Subscription {
    replay: VecDeque<Message>,
    live: Receiver<Message>,
}

impl Subscription {
    pub fn try_recv(&mut self) -> Option<Message> {
        if let Some(m) = self.replay.pop_front() {
            return Some(m);
        }
        self.live.try_recv().ok()
    }

    pub fn recv_timeout(&mut self, timeout: Duration) -> Option<Message> {
        if let Some(m) = self.replay.pop_front() {
            return Some(m);
        }
        self.live.recv_timeout(timeout).ok()
    }

    /// Drain whatever is immediately available.
    pub fn drain(&mut self) -> Vec<Message> {
        let mut out = Vec::new();
        while let Some(m) = self.try_recv() {
            out.push(m);
        }
        out
    }
}
