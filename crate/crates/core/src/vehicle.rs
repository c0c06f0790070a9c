//! Per-AGV state: trajectory following, wheel encoders, service modes and
//! the wheel-level tracking loop.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powertrain::{traction_force_drive, AgvParams, BatteryPack, ContainerClass};
use crate::supervisor::geometry::normalize_angle;
use crate::supervisor::{Pose, StopAction, Trajectory};

pub use crate::supervisor::geometry::speed_limit_for;

/// Encoder resolution per wheel revolution.
pub const PULSES_PER_REV: f64 = 1024.0;

/// Wheel order of the counters.
pub const WHEEL_NAMES: [&str; 4] = ["front_left", "front_right", "rear_left", "rear_right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Standby,
    MoveToTarget,
    Loading,
    Unloading,
}

impl Mode {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Mode::Standby, Mode::MoveToTarget, Mode::Loading, Mode::Unloading].get(c as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Standby => "standby",
            Mode::MoveToTarget => "move",
            Mode::Loading => "loading",
            Mode::Unloading => "unloading",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("illegal mode transition {from:?} -> {to:?}")]
    IllegalTransition { from: Mode, to: Mode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WheelDirection {
    Cw,
    Ccw,
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelCommand {
    pub direction: WheelDirection,
    pub duty: f64,
}

/// Proportional encoder-count tracking: duty grows with the count error
/// and saturates at 1.
pub fn track_wheel_reference(current: i64, reference: i64, gain: f64) -> WheelCommand {
    let err = reference - current;
    let direction = match err.signum() {
        1 => WheelDirection::Cw,
        -1 => WheelDirection::Ccw,
        _ => WheelDirection::Brake,
    };
    let duty = if err == 0 { 0.0 } else { (gain * err.unsigned_abs() as f64).clamp(0.0, 1.0) };
    WheelCommand { direction, duty }
}

/// Arc length per pulse.
pub fn pulse_quantum(params: &AgvParams) -> f64 {
    2.0 * PI * params.wheel_radius_m / PULSES_PER_REV
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u32,
    /// Time of this state.
    pub t: f64,
    pub pose_true: Pose,
    pub speed: f64,
    pub mode: Mode,
    pub wheel_pulses: [i64; 4],
    /// Exact cumulative arc length per wheel behind the counters.
    pub wheel_distance_m: [f64; 4],
    pub carried: Option<ContainerClass>,
    /// Container to pick up on the current job.
    pub cargo: Option<ContainerClass>,
    pub pack: BatteryPack,
    pub trajectory: Option<Trajectory>,
    pub path_progress: f64,
    /// Energy drawn so far, booked independently of the pack.
    pub energy_wh: f64,
    /// Traction power requested during the last step.
    pub last_power_w: f64,
    pub odometer_m: f64,
    /// End of the current service dwell.
    pub dwell_until: Option<f64>,
    pub depleted: bool,
    /// Revision of the last trajectory finished.
    pub completed_revision: Option<u32>,
}

impl VehicleState {
    pub fn new(id: u32, pose: Pose, pack: BatteryPack) -> Self {
        Self {
            id,
            t: 0.0,
            pose_true: pose,
            speed: 0.0,
            mode: Mode::Standby,
            wheel_pulses: [0; 4],
            wheel_distance_m: [0.0; 4],
            carried: None,
            cargo: None,
            pack,
            trajectory: None,
            path_progress: 0.0,
            energy_wh: 0.0,
            last_power_w: 0.0,
            odometer_m: 0.0,
            dwell_until: None,
            depleted: false,
            completed_revision: None,
        }
    }

    /// Starts following `traj`, carrying `cargo` once loaded.
    pub fn assign(&mut self, traj: Trajectory, cargo: Option<ContainerClass>) -> Result<(), VehicleError> {
        if self.mode == Mode::Standby {
            *self = set_mode(self.clone(), Mode::MoveToTarget, 0.0)?;
        }
        self.cargo = cargo;
        self.path_progress = traj.state_at(self.t).0;
        self.trajectory = Some(traj);
        Ok(())
    }

    /// Replaces the followed profile when the new one agrees with the
    /// current motion state. Returns whether it was adopted.
    pub fn adopt_retime(&mut self, traj: Trajectory) -> bool {
        let Some(cur) = &self.trajectory else { return false };
        if cur.path != traj.path || traj.revision <= cur.revision {
            return false;
        }
        let (s0, v0, _) = cur.state_at(self.t);
        let (s1, v1, _) = traj.state_at(self.t);
        if (s0 - s1).abs() > 1e-6 || (v0 - v1).abs() > 1e-6 {
            return false;
        }
        self.trajectory = Some(traj);
        true
    }
}

fn legal(from: Mode, to: Mode) -> bool {
    use Mode::*;
    matches!(
        (from, to),
        (Standby, MoveToTarget)
            | (MoveToTarget, Loading)
            | (MoveToTarget, Unloading)
            | (MoveToTarget, Standby)
            | (Loading, MoveToTarget)
            | (Unloading, Standby)
            | (Unloading, MoveToTarget)
            | (Loading, Standby)
    ) || from == to
}

/// Mode change. Service modes finish `dwell` seconds after `state.t`.
pub fn set_mode(mut state: VehicleState, mode: Mode, dwell: f64) -> Result<VehicleState, VehicleError> {
    let bad = VehicleError::IllegalTransition { from: state.mode, to: mode };
    if !legal(state.mode, mode) {
        return Err(bad);
    }
    match mode {
        Mode::Loading if state.carried.is_some() => return Err(bad),
        Mode::Unloading if state.carried.is_none() => return Err(bad),
        _ => {}
    }
    state.dwell_until = matches!(mode, Mode::Loading | Mode::Unloading).then_some(state.t + dwell);
    state.mode = mode;
    Ok(state)
}

/// Finishes a service dwell that has elapsed.
fn settle_dwell(mut s: VehicleState) -> VehicleState {
    if let Some(until) = s.dwell_until {
        if s.t + 1e-9 >= until {
            s.dwell_until = None;
            match s.mode {
                Mode::Loading => {
                    s.carried = s.cargo.or(Some(ContainerClass::Std20));
                    s.mode = Mode::MoveToTarget;
                }
                Mode::Unloading => {
                    s.carried = None;
                    s.cargo = None;
                    s.mode = Mode::Standby;
                }
                _ => {}
            }
        }
    }
    s
}

/// Advances the vehicle by `dt` along its trajectory's time-indexed profile.
pub fn step_kinematics(state: VehicleState, params: &AgvParams, dt: f64) -> VehicleState {
    let mut s = state;
    let t1 = s.t + dt;
    s.last_power_w = 0.0;
    let Some(traj) = s.trajectory.clone() else {
        s.t = t1;
        s.speed = 0.0;
        return settle_dwell(s);
    };
    let v0 = s.speed;
    let (pos1, v1) = if s.depleted {
        let v1 = (v0 - params.a_max * dt).max(0.0);
        (s.path_progress + 0.5 * (v0 + v1) * dt, v1)
    } else {
        let (p, v, _) = traj.state_at(t1);
        (p, v)
    };
    let ds = (pos1 - s.path_progress).max(0.0);
    let pose1 = traj.geometry().pose_at(pos1);
    let dtheta = normalize_angle(pose1.heading - s.pose_true.heading);
    let half = 0.5 * params.wheelbase_d_m * dtheta;
    let deltas = [ds - half, ds + half, ds - half, ds + half];
    let q = pulse_quantum(params);
    for w in 0..4 {
        s.wheel_distance_m[w] += deltas[w];
        s.wheel_pulses[w] = (s.wheel_distance_m[w] / q).round() as i64;
    }
    if ds > 0.0 && !s.depleted {
        let acc = (v1 - v0) / dt;
        let power = traction_force_drive(params, s.carried, acc) * ds / dt;
        s.last_power_w = power;
        match s.pack.consume(power, dt) {
            Ok(e) => s.energy_wh += e,
            Err(crate::powertrain::PowertrainError::Depleted { consumed_wh }) => {
                s.energy_wh += consumed_wh;
                s.depleted = true;
            }
            Err(_) => {}
        }
    }
    s.odometer_m += ds;
    s.pose_true = pose1;
    s.path_progress = pos1;
    s.speed = v1;
    s.t = t1;

    if s.depleted {
        if v1 <= 0.0 {
            s.trajectory = None;
            s.dwell_until = None;
            s.mode = Mode::Standby;
        }
        return s;
    }

    // Service stops: the profile rests at a dock for the dwell.
    let geom = traj.geometry();
    for stop in &traj.stops {
        if stop.action == StopAction::Reverse || stop.dwell_s <= 0.0 {
            continue;
        }
        let at = geom.stop_s[stop.path_index];
        let arrive = traj.service_start(stop);
        if s.dwell_until.is_none() && s.mode == Mode::MoveToTarget && t1 + 1e-9 >= arrive && (pos1 - at).abs() < 1e-9 {
            let began = (t1 - arrive).max(0.0);
            let mode = if stop.action == StopAction::Load { Mode::Loading } else { Mode::Unloading };
            let want_carry = mode == Mode::Loading;
            if want_carry == s.carried.is_none() {
                s = set_mode(s, mode, stop.dwell_s - began).expect("service order follows the job");
            }
        }
    }
    s = settle_dwell(s);
    if t1 + 1e-9 >= traj.completion_time() && s.dwell_until.is_none() {
        if s.mode == Mode::MoveToTarget {
            s.mode = Mode::Standby;
        }
        if s.mode == Mode::Standby {
            s.completed_revision = Some(traj.revision);
            s.trajectory = None;
            s.speed = 0.0;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powertrain::{size_battery_pack, Chemistry};

    fn pack() -> BatteryPack {
        size_battery_pack(Chemistry::LiFePO4.cell(), 640.0, 200_000.0)
    }

    #[test]
    fn idle_step_changes_nothing_but_time() {
        let s = VehicleState::new(1, Pose::new(0.0, 0.0, 0.0), pack());
        let n = step_kinematics(s.clone(), &AgvParams::default(), 0.1);
        assert_eq!(n.wheel_pulses, s.wheel_pulses);
        assert_eq!(n.pose_true, s.pose_true);
    }

    #[test]
    fn tracking_directions() {
        assert_eq!(track_wheel_reference(100, 100, 0.1), WheelCommand { direction: WheelDirection::Brake, duty: 0.0 });
        assert_eq!(track_wheel_reference(0, 1000, 0.01), WheelCommand { direction: WheelDirection::Cw, duty: 1.0 });
        assert_eq!(track_wheel_reference(10, 0, 0.01).direction, WheelDirection::Ccw);
    }

    #[test]
    fn loading_twice_is_illegal() {
        let mut s = VehicleState::new(1, Pose::new(0.0, 0.0, 0.0), pack());
        s = set_mode(s, Mode::MoveToTarget, 0.0).unwrap();
        s.carried = Some(ContainerClass::Std20);
        assert!(matches!(set_mode(s, Mode::Loading, 60.0), Err(VehicleError::IllegalTransition { .. })));
    }

    #[test]
    fn speed_limits() {
        use crate::supervisor::SegmentKind;
        let p = AgvParams::default();
        assert_eq!(speed_limit_for(SegmentKind::Straight, &p), 6.0);
        assert_eq!(speed_limit_for(SegmentKind::Curve, &p), 3.0);
        assert_eq!(speed_limit_for(SegmentKind::Crab, &p), 1.0);
    }
}
