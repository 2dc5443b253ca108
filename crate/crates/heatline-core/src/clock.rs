//! Wall-clock or virtual time source shared by the fabric and the pipeline.
//!
//! Live runs use [`Clock::wall`]; deterministic tests use a virtual clock that
//! only moves when the test advances it, so cadence assertions (one snapshot
//! per second, staleness bounds) are exact.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

pub const NS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
pub enum Clock {
    Wall,
    Virtual(Arc<AtomicU64>),
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall
    }

    /// Virtual clock starting at `start_ns` nanoseconds since the epoch.
    pub fn virtual_at(start_ns: u64) -> Self {
        Clock::Virtual(Arc::new(AtomicU64::new(start_ns)))
    }

    pub fn now_ns(&self) -> u64 {
        match self {
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("system clock before epoch")
                .as_nanos() as u64,
            Clock::Virtual(t) => t.load(Ordering::SeqCst),
        }
    }

    /// Advance a virtual clock. Panics on a wall clock: tests that advance
    /// time must have been handed a virtual clock.
    pub fn advance_ns(&self, ns: u64) {
        match self {
            Clock::Wall => panic!("cannot advance a wall clock"),
            Clock::Virtual(t) => {
                t.fetch_add(ns, Ordering::SeqCst);
            }
        }
    }

    pub fn advance_secs(&self, secs: u64) {
        self.advance_ns(secs * NS_PER_SEC);
    }
}
