//! Folding SC self-reports and neighbor-MSSP tracks into the local picture.

use super::observer::{measure, predict};
use super::{Cov2, ObserverParams, PerceptionError, Track};
use crate::protocol::SeaReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconcileParams {
    /// Position std assigned to SC self-reports, m.
    pub sea_position_std: f64,
    /// Speed std assigned to SC self-reports, m/s.
    pub sea_speed_std: f64,
    /// Gate for matching self-reports and neighbor tracks, m.
    pub gate: f64,
}

impl Default for ReconcileParams {
    fn default() -> Self {
        Self { sea_position_std: 0.1, sea_speed_std: 0.1, gate: 3.0 }
    }
}

fn nearest(tracks: &[Track], position: f64, lane: u8, gate: f64, skip: &[bool]) -> Option<usize> {
    tracks
        .iter()
        .enumerate()
        .filter(|(i, t)| !skip[*i] && t.lane == lane && (t.position - position).abs() <= gate)
        .min_by(|a, b| {
            (a.1.position - position).abs().total_cmp(&(b.1.position - position).abs()).then(a.1.id.cmp(&b.1.id))
        })
        .map(|(i, _)| i)
}

/// Information-form fusion of two independent Gaussian estimates.
pub(crate) fn fuse(a: &Track, b: &Track) -> Track {
    let (x, cov) = match (a.covariance.inverse(), b.covariance.inverse()) {
        (Some(ia), Some(ib)) => {
            let info = Cov2 { pp: ia.pp + ib.pp, pv: ia.pv + ib.pv, vv: ia.vv + ib.vv };
            let cov = info.inverse().expect("sum of positive definite matrices is invertible");
            let yp = ia.pp * a.position + ia.pv * a.velocity + ib.pp * b.position + ib.pv * b.velocity;
            let yv = ia.pv * a.position + ia.vv * a.velocity + ib.pv * b.position + ib.vv * b.velocity;
            ((cov.pp * yp + cov.pv * yv, cov.pv * yp + cov.vv * yv), cov)
        }
        _ => {
            // Degenerate covariance: fall back to per-component weighting.
            let w = |va: f64, vb: f64| if va + vb == 0.0 { 0.5 } else { vb / (va + vb) };
            let wp = w(a.covariance.pp, b.covariance.pp);
            let wv = w(a.covariance.vv, b.covariance.vv);
            let hv = |va: f64, vb: f64| if va + vb == 0.0 { 0.0 } else { va * vb / (va + vb) };
            (
                (wp * a.position + (1.0 - wp) * b.position, wv * a.velocity + (1.0 - wv) * b.velocity),
                Cov2::diag(hv(a.covariance.pp, b.covariance.pp), hv(a.covariance.vv, b.covariance.vv)),
            )
        }
    };
    Track {
        position: x.0,
        velocity: x.1,
        covariance: cov,
        miss_count: 0,
        last_update: a.last_update.max(b.last_update),
        ..a.clone()
    }
}

/// Reconciles this MSSP's tracks with SC self-reports and tracks shared by
/// neighboring MSSPs.
///
/// Self-reports act as precise position and speed measurements on the
/// nearest gated track. Neighbor tracks inside `coverage` are fused with
/// the own track of the same id, else the nearest gated own track, else
/// adopted as-is.
pub fn reconcile(
    own: Vec<Track>,
    neighbor: &[Track],
    sea: &[SeaReport],
    now: f64,
    coverage: (f64, f64),
    params: &ReconcileParams,
    observer: &ObserverParams,
) -> Result<Vec<Track>, PerceptionError> {
    let mut tracks = own;
    let no_skip = vec![false; tracks.len()];
    let mut reports: Vec<&SeaReport> = sea.iter().collect();
    reports.sort_by_key(|r| r.sc_id);
    for r in reports {
        let position = r.position + r.speed * (now - r.timestamp).max(0.0);
        if let Some(i) = nearest(&tracks, position, r.lane, params.gate, &no_skip) {
            let t = measure(&tracks[i], 0, position, params.sea_position_std.powi(2))?;
            let mut t = measure(&t, 1, r.speed, params.sea_speed_std.powi(2))?;
            t.miss_count = 0;
            tracks[i] = t;
        }
    }

    let mut fused = vec![false; tracks.len()];
    let mut shared: Vec<&Track> = neighbor.iter().collect();
    shared.sort_by_key(|t| t.id);
    for nt in shared {
        let dt = now - nt.last_update;
        let aligned = if dt > 0.0 { predict(nt, dt, observer) } else { nt.clone() };
        if aligned.position < coverage.0 || aligned.position > coverage.1 {
            continue;
        }
        let target = tracks
            .iter()
            .position(|t| t.id == aligned.id)
            .or_else(|| nearest(&tracks, aligned.position, aligned.lane, params.gate, &fused));
        match target {
            Some(i) => {
                tracks[i] = fuse(&tracks[i], &aligned);
                fused[i] = true;
            }
            None => {
                tracks.push(Track { miss_count: 0, ..aligned });
                fused.push(true);
            }
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ScId, TrackId};
    use crate::perception::ObjectClass;
    use crate::protocol::DbwStatus;

    fn track(id: u32, position: f64, var: f64) -> Track {
        Track {
            id: TrackId(id),
            class: ObjectClass::Vehicle,
            position,
            velocity: 20.0,
            covariance: Cov2::diag(var, 1.0),
            lane: 0,
            last_update: 1.0,
            miss_count: 2,
            hits: 10,
        }
    }

    fn sea(position: f64) -> SeaReport {
        SeaReport { sc_id: ScId(7), timestamp: 1.0, position, lane: 0, speed: 20.0, dbw_status: DbwStatus::Ok }
    }

    #[test]
    fn self_report_dominates_fused_position() {
        let out = reconcile(
            vec![track(1, 100.0, 1.0)],
            &[],
            &[sea(100.1)],
            1.0,
            (0.0, 500.0),
            &ReconcileParams::default(),
            &ObserverParams::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        let p = out[0].position;
        // (100/1 + 100.1/0.01) / (1 + 100)
        assert!((p - 10110.0 / 101.0).abs() < 1e-9);
        assert!((100.05..=100.11).contains(&p), "fused {p}");
        assert_eq!(out[0].miss_count, 0);
    }

    #[test]
    fn no_inputs_is_identity() {
        let own = vec![track(1, 100.0, 1.0), track(2, 140.0, 2.0)];
        let out = reconcile(
            own.clone(),
            &[],
            &[],
            1.0,
            (0.0, 500.0),
            &ReconcileParams::default(),
            &ObserverParams::default(),
        )
        .unwrap();
        assert_eq!(out, own);
    }

    #[test]
    fn duplicate_neighbor_track_is_merged() {
        let own = vec![track(1, 100.0, 1.0)];
        let dup = track(1, 100.4, 0.5);
        let out =
            reconcile(own, &[dup], &[], 1.0, (0.0, 500.0), &ReconcileParams::default(), &ObserverParams::default())
                .unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].covariance.pp <= 0.5);
    }

    #[test]
    fn neighbor_tracks_outside_coverage_are_ignored_and_new_ones_adopted() {
        let own = vec![track(1, 100.0, 1.0)];
        let far = track(50, 900.0, 1.0);
        let fresh = track(51, 300.0, 1.0);
        let out = reconcile(
            own,
            &[far, fresh],
            &[],
            1.0,
            (0.0, 500.0),
            &ReconcileParams::default(),
            &ObserverParams::default(),
        )
        .unwrap();
        let ids: Vec<u32> = out.iter().map(|t| t.id.0).collect();
        assert_eq!(ids, vec![1, 51]);
    }

    #[test]
    fn fusion_never_increases_position_variance() {
        for (va, vb) in [(1.0, 1.0), (0.1, 5.0), (3.0, 0.2)] {
            let mut a = track(1, 10.0, va);
            a.covariance.pv = 0.3 * va.sqrt();
            let b = track(2, 11.0, vb);
            let f = fuse(&a, &b);
            assert!(f.covariance.pp <= va.min(vb) + 1e-12, "{va} {vb} -> {}", f.covariance.pp);
        }
    }
}
