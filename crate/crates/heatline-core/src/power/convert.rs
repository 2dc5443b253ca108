//! Power-to-voltage conversion.
//!
//! A zone's emitted power scales with the square of the applied voltage, so
//! the new voltage follows from the old one and the power ratio:
//! `V_new = ceil(V_old * sqrt(P_new / P_old))`, computed per zone and
//! assembled into the five-zone update vector.

use serde::{Deserialize, Serialize};

use crate::ZONE_COUNT;

use super::PowerError;

/// Relative width of the integer-snap window applied before the ceiling.
/// Exact ratios (P_new == P_old, perfect-square ratios) land a few ulps away
/// from an integer after the float sqrt; values this close to an integer are
/// treated as that integer so the ceiling does not overshoot by one volt.
const INTEGER_SNAP_REL: f64 = 1e-9;

/// New voltage for one zone. Returns whole volts, floored at 1 V.
pub fn zone_voltage(v_old: f64, p_old: f64, p_new: f64) -> Result<u32, PowerError> {
    if !v_old.is_finite() || !p_old.is_finite() || !p_new.is_finite() {
        return Err(PowerError::NonFinite);
    }
    if v_old <= 0.0 {
        return Err(PowerError::NonPositiveVoltage(v_old));
    }
    if p_new < 0.0 {
        return Err(PowerError::NegativePower(p_new));
    }
    if p_old <= 0.0 {
        return Err(PowerError::UndefinedRatio { p_old, p_new });
    }
    let x = v_old * (p_new / p_old).sqrt();
    if !x.is_finite() {
        return Err(PowerError::NonFinite);
    }
    let nearest = x.round();
    let snapped = if (x - nearest).abs() <= INTEGER_SNAP_REL * nearest.abs().max(1.0) {
        nearest
    } else {
        x
    };
    Ok((snapped.ceil().max(1.0)) as u32)
}

/// Outcome of converting a full five-zone update. Zones whose ratio is
/// undefined (old power zero while commanding power) are flagged and keep
/// their old voltage; no new value is emitted for them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionOutcome {
    pub voltages: [u32; ZONE_COUNT],
    pub flagged_zones: Vec<usize>,
}

pub fn power_to_voltage(
    v_old: &[f64; ZONE_COUNT],
    p_old: &[f64; ZONE_COUNT],
    p_new: &[f64; ZONE_COUNT],
) -> Result<ConversionOutcome, PowerError> {
    let mut voltages = [0u32; ZONE_COUNT];
    let mut flagged = Vec::new();
    for zone in 0..ZONE_COUNT {
        match zone_voltage(v_old[zone], p_old[zone], p_new[zone]) {
            Ok(v) => voltages[zone] = v,
            Err(PowerError::UndefinedRatio { .. }) => {
                flagged.push(zone);
                voltages[zone] = keep_old(v_old[zone])?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ConversionOutcome { voltages, flagged_zones: flagged })
}

fn keep_old(v_old: f64) -> Result<u32, PowerError> {
    if !v_old.is_finite() {
        return Err(PowerError::NonFinite);
    }
    if v_old <= 0.0 {
        return Err(PowerError::NonPositiveVoltage(v_old));
    }
    Ok(v_old.ceil().max(1.0) as u32)
}

/// The five new zone voltages plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerUpdate {
    pub new_voltages: [u32; ZONE_COUNT],
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub manager: String,
    pub algorithm_version: String,
    pub snapshot_time_ns: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_ratio_returns_old_voltage() {
        for v in [1.0, 57.0, 100.0, 499.0] {
            for p in [50.0, 123.0, 600.0] {
                assert_eq!(zone_voltage(v, p, p).unwrap(), v as u32);
            }
        }
    }

    #[test]
    fn hand_computed_ratios() {
        // 100 * sqrt(500/400) = 111.803... -> 112
        assert_eq!(zone_voltage(100.0, 400.0, 500.0).unwrap(), 112);
        // 100 * sqrt(2) = 141.42... -> 142
        assert_eq!(zone_voltage(100.0, 200.0, 400.0).unwrap(), 142);
    }

    #[test]
    fn exact_ratio_does_not_overshoot() {
        // 300 * sqrt(200/288) = 300 * 5/6 = 250 exactly.
        assert_eq!(zone_voltage(300.0, 288.0, 200.0).unwrap(), 250);
        // 240 * sqrt(245/500) = 240 * 0.7 = 168 exactly.
        assert_eq!(zone_voltage(240.0, 500.0, 245.0).unwrap(), 168);
    }

    #[test]
    fn zero_target_power_floors_at_one_volt() {
        assert_eq!(zone_voltage(250.0, 300.0, 0.0).unwrap(), 1);
    }

    #[test]
    fn undefined_ratio_is_flagged_per_zone() {
        let v_old = [100.0; ZONE_COUNT];
        let mut p_old = [200.0; ZONE_COUNT];
        p_old[3] = 0.0;
        let p_new = [250.0; ZONE_COUNT];
        let out = power_to_voltage(&v_old, &p_old, &p_new).unwrap();
        assert_eq!(out.flagged_zones, vec![3]);
        assert_eq!(out.voltages[3], 100); // keeps the old voltage
        assert_eq!(out.voltages[0], zone_voltage(100.0, 200.0, 250.0).unwrap());
    }

    #[test]
    fn invalid_inputs_error() {
        assert!(matches!(zone_voltage(0.0, 1.0, 1.0), Err(PowerError::NonPositiveVoltage(_))));
        assert!(matches!(zone_voltage(100.0, 1.0, -2.0), Err(PowerError::NegativePower(_))));
        assert!(matches!(zone_voltage(f64::NAN, 1.0, 1.0), Err(PowerError::NonFinite)));
    }

    #[test]
    fn monotone_in_target_power() {
        let mut prev = 0;
        for i in 0..=400 {
            let p_new = 50.0 + i as f64 * 1.375;
            let v = zone_voltage(230.0, 310.0, p_new).unwrap();
            assert!(v >= prev, "p_new={p_new} gave {v} < {prev}");
            prev = v;
        }
    }
}
