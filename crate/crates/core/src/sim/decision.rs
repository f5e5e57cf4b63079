//! SC tactical policy.

use super::scenario::PolicyParams;
use super::vehicle::{DbwCommand, LaneDir, VehicleKind};
use crate::perception::{IncidentKind, ObjectClass};
use crate::protocol::{SaFrame, SeaReport, TrackReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    FreeFlow,
    Follow,
    Overtake,
    IncidentAvoid,
    IncidentStop,
    StaleSa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub command: DbwCommand,
    pub reason: DecisionReason,
    /// The SA was older than the staleness limit.
    pub stale: bool,
}

const LANE_DIRS: [LaneDir; 2] = [LaneDir::Left, LaneDir::Right];

struct View<'a> {
    own: &'a SeaReport,
    tracks: Vec<&'a TrackReport>,
}

impl<'a> View<'a> {
    /// Drops the SC's own track: the nearest same-lane track within the gate.
    fn new(sa: &'a SaFrame, own: &'a SeaReport, self_gate: f64) -> Self {
        let own_track = sa
            .tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.lane == own.lane && (t.position - own.position).abs() <= self_gate)
            .min_by(|a, b| {
                (a.1.position - own.position).abs().total_cmp(&(b.1.position - own.position).abs()).then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i);
        let tracks = sa.tracks.iter().enumerate().filter(|(i, _)| Some(*i) != own_track).map(|(_, t)| t).collect();
        Self { own, tracks }
    }

    fn own_length(&self) -> f64 {
        VehicleKind::Iea.length()
    }

    /// Nearest track ahead in `lane` as (bumper gap, speed).
    fn ahead(&self, lane: u8) -> Option<(f64, f64)> {
        self.tracks
            .iter()
            .filter(|t| t.lane == lane && t.position > self.own.position)
            .map(|t| (t.position - t.class.nominal_length() - self.own.position, t.velocity))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Nearest track behind in `lane` as (bumper gap, speed).
    fn behind(&self, lane: u8) -> Option<(f64, f64)> {
        self.tracks
            .iter()
            .filter(|t| t.lane == lane && t.position <= self.own.position)
            .map(|t| (self.own.position - self.own_length() - t.position, t.velocity))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    fn lane_open(&self, lane: u8, policy: &PolicyParams) -> bool {
        let v = self.own.speed;
        let front_ok = self.ahead(lane).is_none_or(|(gap, _)| gap > policy.safe_gap(v) + policy.hysteresis);
        let rear_ok = self.behind(lane).is_none_or(|(gap, vr)| gap > policy.safe_gap(vr.max(0.0)) + policy.hysteresis);
        front_ok && rear_ok
    }

    fn open_lane(&self, lane_count: u8, policy: &PolicyParams) -> Option<LaneDir> {
        LANE_DIRS.into_iter().find(|d| d.apply(self.own.lane, lane_count).is_some_and(|l| self.lane_open(l, policy)))
    }
}

/// Chooses the next DBW command from the latest SA frame and the vehicle's
/// own report. `changing_to` is the target lane of a lane change in
/// progress; the vehicle then occupies both lanes and only adjusts speed.
///
/// Free road holds the target speed. A leader whose predicted gap falls
/// below the safe gap triggers an overtake into an open adjacent lane (left
/// first), otherwise speed matching. A stalled-vehicle incident ahead in
/// lane triggers a lane change or a planned stop. SA older than `t_stale`
/// yields a gentle deceleration flagged as stale.
pub fn sc_decide(
    sa: &SaFrame,
    sea: &SeaReport,
    changing_to: Option<u8>,
    now: f64,
    dt: f64,
    policy: &PolicyParams,
    lane_count: u8,
) -> Decision {
    let v = sea.speed;
    if now - sa.timestamp > policy.t_stale {
        return Decision {
            command: DbwCommand::SetSpeed((v - policy.stale_decel * dt).max(0.0)),
            reason: DecisionReason::StaleSa,
            stale: true,
        };
    }
    let view = View::new(sa, sea, policy.self_gate);
    let decide = |command, reason| Decision { command, reason, stale: false };
    let lanes: Vec<u8> = std::iter::once(sea.lane).chain(changing_to).collect();
    let may_change = changing_to.is_none();

    let stall_ahead = sa
        .incidents
        .iter()
        .filter(|i| i.kind == IncidentKind::StalledVehicle && lanes.contains(&i.lane))
        .map(|i| i.position - ObjectClass::Vehicle.nominal_length() - sea.position)
        .filter(|d| *d > -view.own_length() && *d <= policy.incident_lookahead)
        .min_by(f64::total_cmp);
    if let Some(dist) = stall_ahead {
        if let Some(dir) = view.open_lane(lane_count, policy).filter(|_| may_change) {
            return decide(DbwCommand::LaneChange(dir), DecisionReason::IncidentAvoid);
        }
        let room = (dist - policy.s0).max(0.0);
        let allowed = (2.0 * policy.comfort_decel * room).sqrt().min(policy.target_speed);
        return decide(DbwCommand::SetSpeed(allowed.min(v)), DecisionReason::IncidentStop);
    }

    let leader = lanes.iter().filter_map(|&l| view.ahead(l)).min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((gap, vl)) = leader {
        let predicted = gap + (vl - v).min(0.0) * policy.prediction_horizon;
        let safe = policy.safe_gap(v);
        if predicted < safe {
            if vl < policy.target_speed && may_change {
                if let Some(dir) = view.open_lane(lane_count, policy) {
                    return decide(DbwCommand::LaneChange(dir), DecisionReason::Overtake);
                }
            }
            let scale = (gap / safe).clamp(0.0, 1.0);
            let target = (vl.max(0.0) * scale).min(policy.target_speed);
            return decide(DbwCommand::SetSpeed(target), DecisionReason::Follow);
        }
    }
    decide(DbwCommand::SetSpeed(policy.target_speed), DecisionReason::FreeFlow)
}

/// Faulty decision making: the intended manoeuvre is mirrored. Lane changes
/// go the other way, speed changes flip sign around the current speed, and
/// emergency stops become cruise commands.
pub fn invert_command(cmd: &DbwCommand, speed: f64, policy: &PolicyParams, v_max: f64) -> DbwCommand {
    match *cmd {
        DbwCommand::LaneChange(d) => DbwCommand::LaneChange(d.opposite()),
        DbwCommand::SetSpeed(x) => DbwCommand::SetSpeed((2.0 * speed - x).clamp(0.0, v_max)),
        DbwCommand::HoldLane => DbwCommand::HoldLane,
        DbwCommand::EmergencyStop => DbwCommand::SetSpeed(policy.target_speed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{MsspId, ScId, TrackId};
    use crate::perception::Incident;
    use crate::protocol::DbwStatus;

    fn sea(position: f64, lane: u8, speed: f64) -> SeaReport {
        SeaReport { sc_id: ScId(1), timestamp: 10.0, position, lane, speed, dbw_status: DbwStatus::Ok }
    }

    fn track(id: u32, position: f64, lane: u8, velocity: f64) -> TrackReport {
        TrackReport {
            track_id: TrackId(id),
            class: ObjectClass::Vehicle,
            position,
            lane,
            velocity,
            position_variance: 0.1,
        }
    }

    fn frame(tracks: Vec<TrackReport>) -> SaFrame {
        SaFrame { frame_seq: 1, mssp_id: MsspId(1), timestamp: 10.0, tracks, incidents: vec![] }
    }

    #[test]
    fn empty_road_cruises() {
        let d = sc_decide(
            &frame(vec![track(1, 100.3, 0, 20.0)]),
            &sea(100.0, 0, 20.0),
            None,
            10.0,
            0.1,
            &PolicyParams::default(),
            2,
        );
        assert_eq!(d.command, DbwCommand::SetSpeed(25.0));
        assert!(!d.stale);
    }

    #[test]
    fn stale_sa_is_flagged() {
        let d = sc_decide(&frame(vec![]), &sea(100.0, 0, 20.0), None, 10.6, 0.1, &PolicyParams::default(), 2);
        assert!(d.stale);
        assert_eq!(d.reason, DecisionReason::StaleSa);
        let DbwCommand::SetSpeed(v) = d.command else { panic!() };
        assert!(v < 20.0);
    }

    #[test]
    fn stall_with_blocked_neighbour_plans_a_stop() {
        let mut sa = frame(vec![track(2, 110.0, 1, 20.0)]);
        sa.incidents.push(Incident {
            kind: IncidentKind::StalledVehicle,
            position: 150.0,
            lane: 0,
            onset: 2.0,
            confidence: 1.0,
            track_id: Some(TrackId(3)),
        });
        let d = sc_decide(&sa, &sea(100.0, 0, 20.0), None, 10.0, 0.1, &PolicyParams::default(), 2);
        assert_eq!(d.reason, DecisionReason::IncidentStop);
        let DbwCommand::SetSpeed(v) = d.command else { panic!() };
        assert!(v <= (2.0 * 3.0 * (150.0 - 4.5 - 100.0 - 2.0f64)).sqrt() + 1e-9);
    }

    #[test]
    fn inversion_mirrors_speed_changes() {
        let p = PolicyParams::default();
        assert_eq!(invert_command(&DbwCommand::SetSpeed(15.0), 20.0, &p, 40.0), DbwCommand::SetSpeed(25.0));
        assert_eq!(invert_command(&DbwCommand::SetSpeed(20.0), 20.0, &p, 40.0), DbwCommand::SetSpeed(20.0));
        assert_eq!(
            invert_command(&DbwCommand::LaneChange(LaneDir::Left), 20.0, &p, 40.0),
            DbwCommand::LaneChange(LaneDir::Right)
        );
    }

    #[test]
    fn mid_change_follows_the_target_lane_leader() {
        let sa = frame(vec![track(2, 115.0, 1, 10.0)]);
        let d = sc_decide(&sa, &sea(100.0, 0, 20.0), Some(1), 10.0, 0.1, &PolicyParams::default(), 3);
        assert_eq!(d.reason, DecisionReason::Follow);
        let DbwCommand::SetSpeed(v) = d.command else { panic!() };
        assert!(v < 10.0);
    }
}
