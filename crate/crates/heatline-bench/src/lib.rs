//! Shared fixtures for the criterion benchmarks.

use heatline_core::telemetry::RawTelemetry;
use heatline_core::twin::{Rod, Twin, TwinConfig};

/// A mid-line twin with one long rod, ready to step.
pub fn bench_twin() -> Twin {
    let config = TwinConfig::default();
    let rod = Rod::new("bench-rod", 25.0, 40.0, config.segment_length, 1100.0)
        .expect("valid rod");
    Twin::new(config, vec![rod]).expect("valid twin")
}

/// A representative raw telemetry payload.
pub fn sample_payload() -> Vec<u8> {
    RawTelemetry::number("T_Z3_2", 1180.5, 1_700_000_000_000_000_000).to_bytes()
}
