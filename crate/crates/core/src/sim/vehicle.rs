//! Vehicle plant, manual-driver model and the DBW command interface.

use crate::perception::ObjectClass;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Iea,
    Manual,
    Bicycle,
    Pedestrian,
}

impl VehicleKind {
    pub fn v_max(self) -> f64 {
        match self {
            VehicleKind::Iea | VehicleKind::Manual => 40.0,
            VehicleKind::Bicycle => 10.0,
            VehicleKind::Pedestrian => 2.5,
        }
    }

    pub fn class(self) -> ObjectClass {
        match self {
            VehicleKind::Iea | VehicleKind::Manual => ObjectClass::Vehicle,
            VehicleKind::Bicycle => ObjectClass::Bicycle,
            VehicleKind::Pedestrian => ObjectClass::Pedestrian,
        }
    }

    pub fn length(self) -> f64 {
        self.class().nominal_length()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveMode {
    ManualDrive,
    Engaged,
    TakeOverPending,
    Parked,
}

/// Lanes are numbered from the rightmost (0); left increases the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneDir {
    Left,
    Right,
}

impl LaneDir {
    pub fn opposite(self) -> Self {
        match self {
            LaneDir::Left => LaneDir::Right,
            LaneDir::Right => LaneDir::Left,
        }
    }

    /// Lane reached from `lane`, if it exists among `lane_count` lanes.
    pub fn apply(self, lane: u8, lane_count: u8) -> Option<u8> {
        match self {
            LaneDir::Left => (lane + 1 < lane_count).then_some(lane + 1),
            LaneDir::Right => lane.checked_sub(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub direction: LaneDir,
    pub target: u8,
    /// Fraction of the manoeuvre completed, in [0, 1).
    pub progress: f64,
}

/// Truth state of one road user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub kind: VehicleKind,
    /// Front position along the corridor, m.
    pub position: f64,
    pub lane: u8,
    pub speed: f64,
    /// Realized acceleration over the last step, m/s^2.
    pub accel: f64,
    pub mode: DriveMode,
    pub lane_change: Option<LaneChange>,
}

impl VehicleState {
    pub fn new(id: u32, kind: VehicleKind, position: f64, lane: u8, speed: f64) -> Self {
        let mode = if kind == VehicleKind::Iea { DriveMode::Engaged } else { DriveMode::ManualDrive };
        Self { id, kind, position, lane, speed, accel: 0.0, mode, lane_change: None }
    }

    pub fn rear(&self) -> f64 {
        self.position - self.kind.length()
    }

    /// Lanes physically occupied; two while changing lanes.
    pub fn occupies(&self, lane: u8) -> bool {
        self.lane == lane || self.lane_change.is_some_and(|lc| lc.target == lane)
    }

    pub fn on_road(&self) -> bool {
        self.mode != DriveMode::Parked
    }
}

/// Plant input for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Actuation {
    pub accel: f64,
    /// Start a lane change this step.
    pub lane_change: Option<LaneDir>,
}

impl Actuation {
    pub fn accel(accel: f64) -> Self {
        Self { accel, lane_change: None }
    }
}

/// Advances point-mass kinematics by `dt` with speed held in `[0, v_max]`,
/// and progresses any lane change; the lane index flips on the step where
/// progress reaches 1.
pub fn step_vehicle(state: &VehicleState, actuation: &Actuation, dt: f64, lane_change_duration: f64) -> VehicleState {
    assert!(dt > 0.0, "step_vehicle requires dt > 0");
    let v_max = state.kind.v_max();
    let (v0, a) = (state.speed, actuation.accel);
    let unclamped = v0 + a * dt;
    let (distance, v1) = if unclamped < 0.0 {
        // Stops inside the step.
        (v0 * v0 / (2.0 * -a), 0.0)
    } else if unclamped > v_max {
        let t1 = (v_max - v0) / a;
        (v0 * t1 + 0.5 * a * t1 * t1 + v_max * (dt - t1), v_max)
    } else {
        (v0 * dt + 0.5 * a * dt * dt, unclamped)
    };
    let mut next = state.clone();
    next.position += distance;
    next.speed = v1;
    next.accel = (v1 - v0) / dt;

    next.lane_change = match (state.lane_change, actuation.lane_change) {
        (Some(lc), _) => Some(lc),
        (None, Some(dir)) => {
            dir.apply(state.lane, u8::MAX).map(|target| LaneChange { direction: dir, target, progress: 0.0 })
        }
        (None, None) => None,
    };
    if let Some(mut lc) = next.lane_change {
        lc.progress += dt / lane_change_duration;
        if lc.progress + 1e-9 >= 1.0 {
            next.lane = lc.target;
            next.lane_change = None;
        } else {
            next.lane_change = Some(lc);
        }
    }
    next
}

/// Intelligent-driver-model parameters for manual traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverParams {
    pub desired_speed: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub s0: f64,
    pub headway: f64,
    pub delta: f64,
    /// Physical braking limit; IDM output is clipped to it.
    pub max_brake: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            desired_speed: 25.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            s0: 2.0,
            headway: 1.5,
            delta: 4.0,
            max_brake: 9.0,
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = [self.desired_speed, self.max_accel, self.comfort_decel, self.headway, self.delta, self.max_brake]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
            && self.s0 >= 0.0;
        ok.then_some(()).ok_or_else(|| "driver parameters must be positive".into())
    }
}

/// IDM acceleration for a driver following a leader `gap` metres ahead
/// (bumper to bumper) moving at `leader_speed`. `None` means free road.
pub fn manual_driver(state: &VehicleState, leader: Option<(f64, f64)>, params: &DriverParams) -> Actuation {
    let v = state.speed;
    let v0 = params.desired_speed.max(1e-3);
    let free = 1.0 - (v / v0).powf(params.delta);
    let interaction = match leader {
        None => 0.0,
        Some((gap, leader_speed)) => {
            let dv = v - leader_speed;
            let s_star = params.s0
                + (v * params.headway + v * dv / (2.0 * (params.max_accel * params.comfort_decel).sqrt())).max(0.0);
            let s = gap.max(1e-6);
            (s_star / s).powi(2)
        }
    };
    Actuation::accel((params.max_accel * (free - interaction)).clamp(-params.max_brake, params.max_accel))
}

/// OEM-side actuation limits for IEA vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbwEnvelope {
    pub max_accel: f64,
    pub max_decel: f64,
    pub lane_change_duration: f64,
}

impl Default for DbwEnvelope {
    fn default() -> Self {
        Self { max_accel: 2.5, max_decel: 7.0, lane_change_duration: 3.0 }
    }
}

impl DbwEnvelope {
    pub fn validate(&self) -> Result<(), String> {
        let ok = [self.max_accel, self.max_decel, self.lane_change_duration].iter().all(|x| x.is_finite() && *x > 0.0);
        ok.then_some(()).ok_or_else(|| "DBW envelope values must be positive".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", content = "arg", rename_all = "snake_case")]
pub enum DbwCommand {
    SetSpeed(f64),
    LaneChange(LaneDir),
    HoldLane,
    EmergencyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbwRejection {
    NoSuchLane,
    LaneChangeInProgress,
    InvalidTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbwResult {
    pub actuation: Actuation,
    pub rejection: Option<DbwRejection>,
    /// The fault made the DBW keep its previous actuation.
    pub ignored: bool,
}

/// Converts a command into an actuation within the envelope.
///
/// With `fault` set to the ignore probability, one uniform draw per call
/// decides whether the command is dropped in favour of `previous`.
#[allow(clippy::too_many_arguments)]
pub fn execute_dbw<R: Rng + ?Sized>(
    state: &VehicleState,
    cmd: &DbwCommand,
    envelope: &DbwEnvelope,
    lane_count: u8,
    dt: f64,
    previous: &Actuation,
    fault: Option<f64>,
    rng: &mut R,
) -> DbwResult {
    if let Some(q) = fault {
        if rng.random::<f64>() < q {
            return DbwResult { actuation: Actuation::accel(previous.accel), rejection: None, ignored: true };
        }
    }
    let clamp = |a: f64| a.clamp(-envelope.max_decel, envelope.max_accel);
    let (actuation, rejection) = match *cmd {
        DbwCommand::SetSpeed(target) if !(target.is_finite() && (0.0..=state.kind.v_max()).contains(&target)) => {
            (Actuation::accel(0.0), Some(DbwRejection::InvalidTarget))
        }
        DbwCommand::SetSpeed(target) => (Actuation::accel(clamp((target - state.speed) / dt)), None),
        DbwCommand::HoldLane => (Actuation::accel(0.0), None),
        DbwCommand::EmergencyStop => (Actuation::accel(clamp(-state.speed / dt)), None),
        DbwCommand::LaneChange(_) if state.lane_change.is_some() => {
            (Actuation::accel(0.0), Some(DbwRejection::LaneChangeInProgress))
        }
        DbwCommand::LaneChange(dir) => match dir.apply(state.lane, lane_count) {
            Some(_) => (Actuation { accel: 0.0, lane_change: Some(dir) }, None),
            None => (Actuation::accel(0.0), Some(DbwRejection::NoSuchLane)),
        },
    };
    DbwResult { actuation, rejection, ignored: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn car(speed: f64) -> VehicleState {
        VehicleState::new(1, VehicleKind::Iea, 100.0, 0, speed)
    }

    #[test]
    fn constant_speed_advances_two_metres() {
        let s = step_vehicle(&car(20.0), &Actuation::accel(0.0), 0.1, 3.0);
        assert!((s.position - 102.0).abs() < 1e-12);
        assert_eq!(s.speed, 20.0);
    }

    #[test]
    fn emergency_stop_at_rest_stays_put() {
        let v = car(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = execute_dbw(
            &v,
            &DbwCommand::EmergencyStop,
            &DbwEnvelope::default(),
            2,
            0.1,
            &Actuation::default(),
            None,
            &mut rng,
        );
        let s = step_vehicle(&v, &r.actuation, 0.1, 3.0);
        assert_eq!((s.position, s.speed), (100.0, 0.0));
    }

    #[test]
    fn braking_never_reverses() {
        let s = step_vehicle(&car(0.3), &Actuation::accel(-7.0), 0.1, 3.0);
        assert_eq!(s.speed, 0.0);
        assert!(s.position >= 100.0 && s.position - 100.0 <= 0.03 + 1e-12);
    }

    #[test]
    fn lane_change_flips_once_on_the_crossing_tick() {
        let mut s = car(20.0);
        let mut a = Actuation { accel: 0.0, lane_change: Some(LaneDir::Left) };
        let mut flips = Vec::new();
        for k in 1..=40 {
            let next = step_vehicle(&s, &a, 0.1, 3.0);
            if next.lane != s.lane {
                flips.push(k);
            }
            s = next;
            a.lane_change = None;
        }
        assert_eq!(flips, vec![30]);
        assert_eq!(s.lane, 1);
    }

    #[test]
    fn set_speed_is_clamped_to_envelope() {
        let env = DbwEnvelope::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let up =
            execute_dbw(&car(10.0), &DbwCommand::SetSpeed(30.0), &env, 2, 0.1, &Actuation::default(), None, &mut rng);
        assert_eq!(up.actuation.accel, env.max_accel);
        let near =
            execute_dbw(&car(10.0), &DbwCommand::SetSpeed(10.1), &env, 2, 0.1, &Actuation::default(), None, &mut rng);
        assert!((near.actuation.accel - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lane_change_past_the_edge_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut v = car(20.0);
        v.lane = 1;
        let r = execute_dbw(
            &v,
            &DbwCommand::LaneChange(LaneDir::Left),
            &DbwEnvelope::default(),
            2,
            0.1,
            &Actuation::default(),
            None,
            &mut rng,
        );
        assert_eq!(r.rejection, Some(DbwRejection::NoSuchLane));
        assert_eq!(r.actuation.lane_change, None);
    }

    #[test]
    fn fully_faulty_dbw_ignores_every_command() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prev = Actuation::accel(0.7);
        for cmd in [
            DbwCommand::SetSpeed(0.0),
            DbwCommand::EmergencyStop,
            DbwCommand::LaneChange(LaneDir::Left),
            DbwCommand::HoldLane,
        ] {
            let r = execute_dbw(&car(20.0), &cmd, &DbwEnvelope::default(), 2, 0.1, &prev, Some(1.0), &mut rng);
            assert!(r.ignored);
            assert_eq!(r.actuation, prev);
        }
    }

    #[test]
    fn idm_free_road_accelerates_within_limit() {
        let p = DriverParams::default();
        let a = manual_driver(&VehicleState::new(1, VehicleKind::Manual, 0.0, 0, 10.0), None, &p).accel;
        assert!(a > 0.0 && a <= p.max_accel);
    }

    #[test]
    fn idm_zero_gap_brakes_hard() {
        let p = DriverParams::default();
        let a = manual_driver(&VehicleState::new(1, VehicleKind::Manual, 0.0, 0, 20.0), Some((1e-3, 20.0)), &p).accel;
        assert_eq!(a, -p.max_brake);
    }
}
