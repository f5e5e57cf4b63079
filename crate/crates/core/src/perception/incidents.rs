use super::{Incident, IncidentKind, ObjectClass, Track};
use crate::ids::TrackId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncidentThresholds {
    /// Below this speed a vehicle track starts accruing stall time, m/s.
    pub v_stall: f64,
    /// Stall time before an incident is raised, s.
    pub t_stall: f64,
    /// A stalled track must exceed `recover_factor * v_stall` to reset.
    pub recover_factor: f64,
    /// Number of travel lanes; tracks outside them are ignored.
    pub lane_count: u8,
}

impl Default for IncidentThresholds {
    fn default() -> Self {
        Self { v_stall: 0.5, t_stall: 5.0, recover_factor: 2.0, lane_count: u8::MAX }
    }
}

const EPS: f64 = 1e-9;

/// Per-track stall timers carried between ticks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StallMonitor {
    elapsed: BTreeMap<TrackId, f64>,
}

impl StallMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elapsed(&self, id: TrackId) -> Option<f64> {
        self.elapsed.get(&id).copied()
    }
}

/// Advances stall timers by `dt` and returns the incidents currently active.
///
/// Timers start below `v_stall` and reset only above
/// `recover_factor * v_stall`. An incident exists once a timer reaches
/// `t_stall`; its confidence is `min(1, elapsed / (2 t_stall))`.
pub fn detect_incidents(
    monitor: &mut StallMonitor,
    tracks: &[Track],
    now: f64,
    dt: f64,
    thresholds: &IncidentThresholds,
) -> Vec<Incident> {
    let mut live = BTreeMap::new();
    let mut out = Vec::new();
    for t in tracks {
        if t.class != ObjectClass::Vehicle || t.lane >= thresholds.lane_count {
            continue;
        }
        let speed = t.velocity.abs();
        let prior = monitor.elapsed.get(&t.id).copied();
        let elapsed = match prior {
            Some(e) if speed <= thresholds.recover_factor * thresholds.v_stall => e + dt,
            None if speed < thresholds.v_stall => dt,
            _ => continue,
        };
        live.insert(t.id, elapsed);
        if elapsed + EPS >= thresholds.t_stall {
            let ratio = elapsed / (2.0 * thresholds.t_stall);
            out.push(Incident {
                kind: IncidentKind::StalledVehicle,
                position: t.position,
                lane: t.lane,
                onset: now - elapsed,
                confidence: if ratio + EPS >= 1.0 { 1.0 } else { ratio },
                track_id: Some(t.id),
            });
        }
    }
    monitor.elapsed = live;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::Cov2;

    fn track(velocity: f64) -> Track {
        Track {
            id: TrackId(1),
            class: ObjectClass::Vehicle,
            position: 300.0,
            velocity,
            covariance: Cov2::diag(1.0, 1.0),
            lane: 0,
            last_update: 0.0,
            miss_count: 0,
            hits: 5,
        }
    }

    #[test]
    fn stalled_for_twice_threshold_has_full_confidence() {
        let th = IncidentThresholds::default();
        let mut mon = StallMonitor::new();
        let mut last = Vec::new();
        let mut prev_conf = 0.0;
        for k in 1..=100 {
            last = detect_incidents(&mut mon, &[track(0.0)], k as f64 * 0.1, 0.1, &th);
            if let Some(i) = last.first() {
                assert!(i.confidence >= prev_conf);
                prev_conf = i.confidence;
            }
        }
        assert_eq!(last.len(), 1);
        assert_eq!(last[0].confidence, 1.0);
        assert_eq!(last[0].kind, IncidentKind::StalledVehicle);
    }

    #[test]
    fn moving_track_raises_nothing() {
        let mut mon = StallMonitor::new();
        for k in 1..=200 {
            assert!(detect_incidents(&mut mon, &[track(10.0)], k as f64 * 0.1, 0.1, &IncidentThresholds::default())
                .is_empty());
        }
    }

    #[test]
    fn recovery_before_threshold_resets_timer() {
        let th = IncidentThresholds::default();
        let mut mon = StallMonitor::new();
        let mut t = 0.0;
        let mut step = |v: f64, mon: &mut StallMonitor| {
            t += 0.1;
            detect_incidents(mon, &[track(v)], t, 0.1, &th)
        };
        // 4 s stalled, a brief wobble inside the hysteresis band, then recovery.
        for _ in 0..40 {
            assert!(step(0.0, &mut mon).is_empty());
        }
        assert!(step(0.8, &mut mon).is_empty());
        assert!(mon.elapsed(TrackId(1)).is_some());
        assert!(step(3.0, &mut mon).is_empty());
        assert!(mon.elapsed(TrackId(1)).is_none());
        for _ in 0..40 {
            assert!(step(0.0, &mut mon).is_empty());
        }
    }
}
