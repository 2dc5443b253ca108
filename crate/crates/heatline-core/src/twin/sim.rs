//! The twin itself: init, single step, multi-step runs, trajectory export.
//!
//! Step order is fixed: the movement manager relocates rods, the temperature
//! manager updates every segment against the powers in force during the step,
//! the controller manager applies the requested power actions (taking effect
//! from the next step), and the sensor manager produces the readout.

use std::io::Write;
use std::path::Path;

use super::state::NO_ACTIONS;
use super::{
    Direction, FurnaceState, Mode, PowerAction, Rod, SensorMode, SensorReadout, TwinConfig,
    TwinError, ZoneActions,
};
use crate::power::zone_voltage;
use crate::ZONE_COUNT;

#[derive(Debug, Clone)]
pub struct Twin {
    config: TwinConfig,
    state: FurnaceState,
}

/// A controller callback failed mid-run; carries whatever completed.
#[derive(Debug)]
pub struct RunAborted {
    pub completed: Vec<(FurnaceState, SensorReadout)>,
    pub step: u64,
    pub reason: String,
}

impl std::fmt::Display for RunAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "controller aborted at step {}: {}", self.step, self.reason)
    }
}

impl std::error::Error for RunAborted {}

impl Twin {
    /// Build a twin at clock 0 from a validated config and rod placement.
    pub fn new(config: TwinConfig, rods: Vec<Rod>) -> Result<Self, TwinError> {
        config.validate()?;
        let track_min = config.warehouse_start();
        let track_max = config.furnace_end();
        for rod in &rods {
            if rod.rear_position() < track_min || rod.front_position > track_max {
                return Err(TwinError::RodOutsideTrack {
                    id: rod.id.clone(),
                    min: track_min,
                    max: track_max,
                });
            }
        }
        for i in 0..rods.len() {
            for j in (i + 1)..rods.len() {
                let (a, b) = (&rods[i], &rods[j]);
                if a.rear_position() < b.front_position && b.rear_position() < a.front_position {
                    return Err(TwinError::OverlappingRods { a: a.id.clone(), b: b.id.clone() });
                }
            }
        }
        let state = FurnaceState {
            clock: 0,
            rods,
            zone_powers: config.initial_powers,
            zone_voltages: config.derived_initial_voltages(),
            mode: config.mode,
            material_id: config.material_id.clone(),
            clamp_events: 0,
        };
        Ok(Twin { config, state })
    }

    pub fn config(&self) -> &TwinConfig {
        &self.config
    }

    pub fn state(&self) -> &FurnaceState {
        &self.state
    }

    /// Directly set one zone's power (clamped to bounds). Used for external
    /// perturbations such as training noise on zones 1-2.
    pub fn set_zone_power(&mut self, zone: usize, power_kw: f64) {
        let (lo, hi) = self.config.power_bounds;
        self.state.zone_powers[zone] = power_kw.clamp(lo, hi);
    }

    /// Actuator interface: command a new zone voltage. Emitted power follows
    /// the square relation `P_new = P_old * (V_new / V_old)^2`, clamped to
    /// the power bounds.
    pub fn apply_voltage_command(&mut self, zone: usize, v_new: f64) {
        let v_old = self.state.zone_voltages[zone];
        if !(v_new > 0.0) || !(v_old > 0.0) {
            return;
        }
        let ratio = v_new / v_old;
        let (lo, hi) = self.config.power_bounds;
        let p_old = self.state.zone_powers[zone];
        self.state.zone_powers[zone] = (p_old * ratio * ratio).clamp(lo, hi);
        self.state.zone_voltages[zone] = v_new;
    }

    /// Advance one step and return the configured sensor readout.
    pub fn step(&mut self, actions: Option<&ZoneActions>) -> SensorReadout {
        self.apply_movement();
        self.apply_temperature();
        self.apply_actions(actions.unwrap_or(&NO_ACTIONS));
        self.state.clock += 1;
        self.readout()
    }

    /// Run `steps` steps, asking `controller` for actions before each one.
    /// Returning `Ok(None)` from the controller means no power change.
    pub fn run<C>(
        &mut self,
        steps: u64,
        mut controller: C,
    ) -> Result<Vec<(FurnaceState, SensorReadout)>, RunAborted>
    where
        C: FnMut(&FurnaceState) -> Result<Option<ZoneActions>, String>,
    {
        let mut trajectory = Vec::with_capacity(steps as usize);
        for i in 0..steps {
            let actions = match controller(&self.state) {
                Ok(a) => a,
                Err(reason) => {
                    return Err(RunAborted { completed: trajectory, step: i, reason });
                }
            };
            let readout = self.step(actions.as_ref());
            trajectory.push((self.state.clone(), readout));
        }
        Ok(trajectory)
    }

    fn apply_movement(&mut self) {
        let delta = self.config.rod_velocity * self.config.step_seconds;
        let span = self.config.warmhold_span;
        for rod in &mut self.state.rods {
            match self.state.mode {
                Mode::NormalProduction => {
                    rod.front_position += delta;
                }
                Mode::Warmholding => match rod.direction {
                    Direction::Forward => {
                        let next = rod.front_position + delta;
                        if next >= span.1 {
                            rod.front_position = span.1;
                            rod.direction = Direction::Backward;
                        } else {
                            rod.front_position = next;
                        }
                    }
                    Direction::Backward => {
                        let next = rod.front_position - delta;
                        if next <= span.0 {
                            rod.front_position = span.0;
                            rod.direction = Direction::Forward;
                        } else {
                            rod.front_position = next;
                        }
                    }
                },
            }
        }
    }

    fn apply_temperature(&mut self) {
        let dt = self.config.step_seconds;
        let gain = self.config.heating_gain;
        let cool = self.config.cooling_rate;
        let ambient = self.config.ambient_temp;
        let powers = self.state.zone_powers;
        for rod in &mut self.state.rods {
            let rear = rod.rear_position();
            let seg_len = rod.effective_segment_length();
            for (i, temp) in rod.segment_temps.iter_mut().enumerate() {
                let center = rear + (i as f64 + 0.5) * seg_len;
                // A segment under a powered coil heats; everywhere else
                // (gaps, dead coils, outside the furnace) it Newton-cools.
                let live_power = self
                    .config
                    .coil_layout
                    .iter()
                    .find(|c| center >= c.start_m && center <= c.end_m && powers[c.zone] > 0.0)
                    .map(|c| powers[c.zone]);
                match live_power {
                    Some(p) => *temp += gain * p * dt,
                    None => *temp += -cool * (*temp - ambient) * dt,
                }
            }
        }
    }

    fn apply_actions(&mut self, actions: &ZoneActions) {
        let (lo, hi) = self.config.power_bounds;
        let step = self.config.power_action_step;
        for zone in 0..ZONE_COUNT {
            let old = self.state.zone_powers[zone];
            let requested = match actions[zone] {
                PowerAction::NoChange => continue,
                PowerAction::Increase => old + step,
                PowerAction::Decrease => old - step,
                PowerAction::DropToLow => lo,
            };
            let clamped = requested.clamp(lo, hi);
            if clamped != requested {
                self.state.clamp_events += 1;
            }
            // Track the voltage that would produce the new power. With a dead
            // zone (old power 0) the ratio is undefined; the voltage is held
            // and the authoritative conversion happens in power control.
            if old > 0.0 && clamped != old {
                if let Ok(v) = zone_voltage(self.state.zone_voltages[zone], old, clamped) {
                    self.state.zone_voltages[zone] = f64::from(v);
                }
            }
            self.state.zone_powers[zone] = clamped;
        }
    }

    /// Temperatures at arbitrary positions; a position with no rod under it
    /// reads ambient.
    pub fn sense_at(&self, positions: &[f64]) -> Vec<f64> {
        positions
            .iter()
            .map(|p| {
                self.state
                    .rods
                    .iter()
                    .find_map(|rod| rod.segment_at(*p).map(|i| rod.segment_temps[i]))
                    .unwrap_or(self.config.ambient_temp)
            })
            .collect()
    }

    fn readout(&self) -> SensorReadout {
        let positions: Vec<f64> = match self.config.readout_sensors {
            SensorMode::Forge => self.config.sensor_positions_forge.clone(),
            SensorMode::Virtual => self
                .config
                .sensor_positions_virtual
                .iter()
                .flatten()
                .copied()
                .collect(),
        };
        SensorReadout {
            temps: self.sense_at(&positions),
            powers: self.state.zone_powers,
            positions,
        }
    }
}

/// Trajectory CSV: step, first-rod front position, sensor temperatures,
/// zone powers.
pub fn export_trajectory_csv(
    path: &Path,
    trajectory: &[(FurnaceState, SensorReadout)],
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    let sensors = trajectory.first().map(|(_, r)| r.temps.len()).unwrap_or(0);
    let mut header = vec!["step".to_string(), "rod_front_m".to_string()];
    header.extend((1..=sensors).map(|i| format!("t_sensor_{i}")));
    header.extend((1..=ZONE_COUNT).map(|z| format!("p_z{z}")));
    writeln!(file, "{}", header.join(","))?;
    for (state, readout) in trajectory {
        let mut row = vec![
            state.clock.to_string(),
            state.rods.first().map(|r| format!("{:.4}", r.front_position)).unwrap_or_default(),
        ];
        row.extend(readout.temps.iter().map(|t| format!("{t:.4}")));
        row.extend(state.zone_powers.iter().map(|p| format!("{p:.4}")));
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::zebra_init;

    fn test_config() -> TwinConfig {
        TwinConfig::default()
    }

    fn rod_at(front: f64, length: f64, temp: f64) -> Rod {
        Rod::new("rod", front, length, 0.05, temp).unwrap()
    }

    #[test]
    fn init_passes_powers_through() {
        let mut cfg = test_config();
        cfg.initial_powers = [300.0, 350.0, 200.0, 150.0, 100.0];
        let twin = Twin::new(cfg, vec![rod_at(4.0, 4.0, 25.0)]).unwrap();
        assert_eq!(twin.state().clock, 0);
        assert_eq!(twin.state().zone_powers, [300.0, 350.0, 200.0, 150.0, 100.0]);
        assert!(twin.state().zone_voltages.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn overlapping_rods_rejected() {
        let rods = vec![rod_at(4.0, 4.0, 25.0), rod_at(6.0, 4.0, 25.0)];
        let err = Twin::new(test_config(), rods).unwrap_err();
        assert!(matches!(err, TwinError::OverlappingRods { .. }));
    }

    #[test]
    fn rod_outside_track_rejected() {
        let err = Twin::new(test_config(), vec![rod_at(40.0, 4.0, 25.0)]).unwrap_err();
        assert!(matches!(err, TwinError::RodOutsideTrack { .. }));
    }

    #[test]
    fn normal_mode_advances_by_velocity_times_dt() {
        let mut cfg = test_config();
        cfg.rod_velocity = 0.1;
        cfg.step_seconds = 1.0;
        let mut twin = Twin::new(cfg, vec![rod_at(4.0, 4.0, 25.0)]).unwrap();
        twin.step(None);
        assert!((twin.state().rods[0].front_position - 4.1).abs() < 1e-12);
    }

    #[test]
    fn warmholding_flips_direction_at_right_bound() {
        let mut cfg = test_config();
        cfg.mode = Mode::Warmholding;
        cfg.warmhold_span = (18.0, 24.0);
        cfg.rod_velocity = 0.5;
        let mut twin = Twin::new(cfg, vec![rod_at(24.0, 4.0, 25.0)]).unwrap();
        twin.step(None);
        let rod = &twin.state().rods[0];
        assert_eq!(rod.direction, Direction::Backward);
        assert!(rod.front_position >= 18.0 && rod.front_position <= 24.0);
    }

    #[test]
    fn pure_cooling_decreases_toward_ambient() {
        let mut cfg = test_config();
        cfg.initial_powers = [0.0; 5];
        cfg.rod_velocity = 0.0;
        let mut twin = Twin::new(cfg, vec![rod_at(4.0, 4.0, 500.0)]).unwrap();
        let mut prev = twin.state().rods[0].max_temp();
        for _ in 0..50 {
            twin.step(None);
            let cur = twin.state().rods[0].max_temp();
            assert!(cur < prev && cur > 25.0);
            prev = cur;
        }
    }

    #[test]
    fn live_coil_heating_matches_update_rule() {
        let mut cfg = test_config();
        cfg.initial_powers = [0.0, 0.0, 200.0, 0.0, 0.0];
        cfg.heating_gain = 0.01;
        cfg.step_seconds = 1.0;
        cfg.rod_velocity = 0.0;
        // Rod fully inside zone 3's first coil (10.0 .. 11.0).
        let rod = Rod::new("r", 10.9, 0.8, 0.05, 600.0).unwrap();
        let mut twin = Twin::new(cfg, vec![rod]).unwrap();
        twin.step(None);
        for t in &twin.state().rods[0].segment_temps {
            assert!((t - 602.0).abs() < 1e-12, "expected +2.0 C, got {}", t - 600.0);
        }
    }

    #[test]
    fn actions_move_clamp_and_record() {
        let mut cfg = test_config();
        cfg.initial_powers = [598.0, 3.0, 200.0, 150.0, 100.0];
        cfg.power_action_step = 5.0;
        cfg.power_bounds = (0.0, 600.0);
        let mut twin = Twin::new(cfg, vec![rod_at(4.0, 4.0, 25.0)]).unwrap();
        use PowerAction::*;
        twin.step(Some(&[Increase, Decrease, DropToLow, NoChange, Increase]));
        let s = twin.state();
        assert_eq!(s.zone_powers[0], 600.0); // clamped at max
        assert_eq!(s.zone_powers[1], 0.0); // clamped at min
        assert_eq!(s.zone_powers[2], 0.0); // dropped to low bound
        assert_eq!(s.zone_powers[3], 150.0);
        assert_eq!(s.zone_powers[4], 105.0);
        assert_eq!(s.clamp_events, 2);
    }

    #[test]
    fn run_composes_and_is_deterministic() {
        let cfg = test_config();
        let rod = rod_at(4.0, 4.0, 900.0);

        let mut twin_a = Twin::new(cfg.clone(), vec![rod.clone()]).unwrap();
        let traj_ab = twin_a.run(12, |_| Ok(None)).unwrap();

        let mut twin_b = Twin::new(cfg, vec![rod]).unwrap();
        let first = twin_b.run(5, |_| Ok(None)).unwrap();
        let second = twin_b.run(7, |_| Ok(None)).unwrap();

        assert_eq!(traj_ab.len(), 12);
        let rejoined: Vec<_> = first.into_iter().chain(second).collect();
        assert_eq!(traj_ab, rejoined);
    }

    #[test]
    fn run_aborts_with_partial_trajectory() {
        let mut twin = Twin::new(test_config(), vec![rod_at(4.0, 4.0, 25.0)]).unwrap();
        let mut calls = 0;
        let err = twin
            .run(10, |_| {
                calls += 1;
                if calls > 3 {
                    Err("controller offline".to_string())
                } else {
                    Ok(None)
                }
            })
            .unwrap_err();
        assert_eq!(err.completed.len(), 3);
        assert_eq!(err.step, 3);
        assert!(err.reason.contains("offline"));
    }

    #[test]
    fn sensor_at_segment_center_reads_exactly() {
        let cfg = test_config();
        let mut rod = rod_at(4.0, 4.0, 25.0);
        for (i, t) in rod.segment_temps.iter_mut().enumerate() {
            *t = 100.0 + i as f64;
        }
        let twin = Twin::new(cfg, vec![rod.clone()]).unwrap();
        for i in (0..rod.segment_count()).step_by(7) {
            let probe = twin.sense_at(&[rod.segment_center(i)]);
            assert_eq!(probe[0], 100.0 + i as f64);
        }
    }

    #[test]
    fn gap_without_rod_reads_ambient() {
        let twin = Twin::new(test_config(), vec![rod_at(4.0, 4.0, 900.0)]).unwrap();
        assert_eq!(twin.sense_at(&[20.0])[0], 25.0);
    }

    #[test]
    fn zebra_rod_in_warmholding_stays_in_span() {
        let mut cfg = test_config();
        cfg.mode = Mode::Warmholding;
        cfg.warmhold_span = (18.0, 24.0);
        cfg.rod_velocity = 0.2;
        cfg.initial_powers = [20.0; 5];
        let rod = zebra_init(&rod_at(22.0, 3.0, 25.0), 1100.0, 900.0, 1.0).unwrap();
        let mut twin = Twin::new(cfg, vec![rod]).unwrap();
        for _ in 0..200 {
            twin.step(None);
            let front = twin.state().rods[0].front_position;
            assert!((18.0..=24.0).contains(&front));
        }
    }

    #[test]
    fn trajectory_export_writes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let mut twin = Twin::new(test_config(), vec![rod_at(4.0, 4.0, 25.0)]).unwrap();
        let traj = twin.run(5, |_| Ok(None)).unwrap();
        export_trajectory_csv(&path, &traj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("step,rod_front_m,t_sensor_1"));
    }
}
