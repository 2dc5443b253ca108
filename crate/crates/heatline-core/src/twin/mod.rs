//! Deterministic discrete-time digital twin of the induction furnace.
//!
//! The twin is a value: stepping consumes no shared state, identical
//! `(config, rods, action sequence)` triples produce bit-identical
//! trajectories. Each step runs the managers in a fixed order: movement,
//! temperature, controller, sensors.

mod config;
mod rod;
mod sim;
mod state;

pub use config::{
    default_coil_layout, default_forge_positions, default_virtual_positions, CoilSpan, Mode,
    SensorMode, TempBand, TwinConfig, FORGE_SENSORS_PER_ZONE, FORGE_SENSOR_COUNT,
    VIRTUAL_SENSORS_PER_ZONE,
};
pub use rod::{zebra_init, Direction, Rod};
pub use sim::{export_trajectory_csv, RunAborted, Twin};
pub use state::{FurnaceState, PowerAction, SensorReadout, ZoneActions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rods `{a}` and `{b}` overlap")]
    OverlappingRods { a: String, b: String },
    #[error("rod `{id}` lies outside the track [{min:.2} m, {max:.2} m]")]
    RodOutsideTrack { id: String, min: f64, max: f64 },
    #[error("zebra band {band_m} m is narrower than one segment ({segment_m} m)")]
    BandTooNarrow { band_m: f64, segment_m: f64 },
    #[error("invalid zebra pattern: {0}")]
    InvalidZebra(String),
}
