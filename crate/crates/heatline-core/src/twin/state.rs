//! Twin state and the per-zone power actions.

use serde::{Deserialize, Serialize};

use super::{Mode, Rod};
use crate::ZONE_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerAction {
    Increase,
    Decrease,
    NoChange,
    DropToLow,
}

pub type ZoneActions = [PowerAction; ZONE_COUNT];

pub const NO_ACTIONS: ZoneActions = [PowerAction::NoChange; ZONE_COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnaceState {
    pub clock: u64,
    pub rods: Vec<Rod>,
    pub zone_powers: [f64; ZONE_COUNT],
    pub zone_voltages: [f64; ZONE_COUNT],
    pub mode: Mode,
    pub material_id: String,
    /// Number of action applications that hit a power bound; clamping is
    /// silent but recorded.
    pub clamp_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReadout {
    pub temps: Vec<f64>,
    pub powers: [f64; ZONE_COUNT],
    pub positions: Vec<f64>,
}
