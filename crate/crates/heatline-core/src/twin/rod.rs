//! Steel rods: position, per-segment temperatures, zebra initialization.

use serde::{Deserialize, Serialize};

use super::TwinError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// A rod occupies `[front_position - length, front_position]` on the track.
/// Segment 0 is the rear (trailing) end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rod {
    pub id: String,
    pub front_position: f64,
    pub length: f64,
    pub segment_temps: Vec<f64>,
    pub direction: Direction,
}

impl Rod {
    pub fn new(
        id: impl Into<String>,
        front_position: f64,
        length: f64,
        segment_length: f64,
        temp: f64,
    ) -> Result<Self, TwinError> {
        if !(length > 0.0) {
            return Err(TwinError::InvalidConfig(format!("rod length must be > 0, got {length}")));
        }
        if !(segment_length > 0.0) {
            return Err(TwinError::InvalidConfig(format!(
                "segment_length must be > 0, got {segment_length}"
            )));
        }
        let segments = (length / segment_length).ceil().max(1.0) as usize;
        Ok(Rod {
            id: id.into(),
            front_position,
            length,
            segment_temps: vec![temp; segments],
            direction: Direction::Forward,
        })
    }

    pub fn rear_position(&self) -> f64 {
        self.front_position - self.length
    }

    pub fn segment_count(&self) -> usize {
        self.segment_temps.len()
    }

    /// Segment pitch implied by the discretization (the last segment may be
    /// shorter than the configured segment length; lengths are spread evenly).
    pub fn effective_segment_length(&self) -> f64 {
        self.length / self.segment_count() as f64
    }

    pub fn segment_center(&self, index: usize) -> f64 {
        self.rear_position() + (index as f64 + 0.5) * self.effective_segment_length()
    }

    pub fn covers(&self, position: f64) -> bool {
        position >= self.rear_position() && position <= self.front_position
    }

    /// Index of the segment whose span contains `position`, if any.
    pub fn segment_at(&self, position: f64) -> Option<usize> {
        if !self.covers(position) {
            return None;
        }
        let idx = ((position - self.rear_position()) / self.effective_segment_length()) as usize;
        Some(idx.min(self.segment_count() - 1))
    }

    pub fn min_temp(&self) -> f64 {
        self.segment_temps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_temp(&self) -> f64 {
        self.segment_temps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Paint alternating hot/cold bands of width `band_m` along the rod,
/// starting hot from the rear end.
pub fn zebra_init(rod: &Rod, hot: f64, cold: f64, band_m: f64) -> Result<Rod, TwinError> {
    if hot < cold {
        return Err(TwinError::InvalidZebra(format!("hot ({hot}) must be >= cold ({cold})")));
    }
    let seg = rod.effective_segment_length();
    if band_m < seg {
        return Err(TwinError::BandTooNarrow { band_m, segment_m: seg });
    }
    let mut out = rod.clone();
    for (i, temp) in out.segment_temps.iter_mut().enumerate() {
        let offset = (i as f64 + 0.5) * seg;
        let band = (offset / band_m).floor() as u64;
        *temp = if band % 2 == 0 { hot } else { cold };
    }
    Ok(out)
}
