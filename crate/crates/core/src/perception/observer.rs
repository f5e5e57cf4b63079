//! Constant-velocity observer with a linear-Gaussian position measurement.

use super::{Cov2, Detection, PerceptionError, Track};
use crate::ids::TrackId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverParams {
    /// White-noise acceleration std driving the process model, m/s^2.
    pub accel_std: f64,
    /// Consecutive missed updates after which a track is dropped.
    pub n_miss: u32,
    /// Prior velocity std for freshly spawned tracks, m/s.
    pub initial_velocity_std: f64,
}

impl Default for ObserverParams {
    fn default() -> Self {
        Self { accel_std: 0.5, n_miss: 5, initial_velocity_std: 30.0 }
    }
}

impl ObserverParams {
    pub fn should_drop(&self, track: &Track) -> bool {
        track.miss_count >= self.n_miss
    }
}

pub fn spawn_track(id: TrackId, det: &Detection, params: &ObserverParams) -> Track {
    Track {
        id,
        class: det.class,
        position: det.position,
        velocity: 0.0,
        covariance: Cov2::diag(det.variance, params.initial_velocity_std.powi(2)),
        lane: det.lane,
        last_update: det.timestamp,
        miss_count: 0,
        hits: 1,
    }
}

/// Time update: `x <- F x`, `P <- F P F' + Q` with the discretized
/// white-noise-acceleration `Q`.
pub fn predict(track: &Track, dt: f64, params: &ObserverParams) -> Track {
    let q = params.accel_std * params.accel_std;
    let Cov2 { pp, pv, vv } = track.covariance;
    let covariance = Cov2 {
        pp: pp + 2.0 * dt * pv + dt * dt * vv + q * dt.powi(4) / 4.0,
        pv: pv + dt * vv + q * dt.powi(3) / 2.0,
        vv: vv + q * dt * dt,
    };
    Track { position: track.position + track.velocity * dt, covariance, ..track.clone() }
}

/// Scalar measurement update on one state component (0 = position,
/// 1 = velocity) using the Joseph form.
pub(crate) fn measure(track: &Track, component: usize, z: f64, r: f64) -> Result<Track, PerceptionError> {
    let Cov2 { pp, pv, vv } = track.covariance;
    let h_var = if component == 0 { pp } else { vv };
    let s = h_var + r;
    if !(s > 0.0) || !s.is_finite() {
        return Err(PerceptionError::Conditioning { track: track.id, detail: format!("innovation variance {s}") });
    }
    let (k_pos, k_vel) = if component == 0 { (pp / s, pv / s) } else { (pv / s, vv / s) };
    let innovation = z - if component == 0 { track.position } else { track.velocity };

    // A = I - K H, P' = A P A' + K r K'.
    let (a00, a01, a10, a11) =
        if component == 0 { (1.0 - k_pos, 0.0, -k_vel, 1.0) } else { (1.0, -k_pos, 0.0, 1.0 - k_vel) };
    let ap00 = a00 * pp + a01 * pv;
    let ap01 = a00 * pv + a01 * vv;
    let ap10 = a10 * pp + a11 * pv;
    let ap11 = a10 * pv + a11 * vv;
    let covariance = Cov2 {
        pp: ap00 * a00 + ap01 * a01 + k_pos * k_pos * r,
        pv: ap00 * a10 + ap01 * a11 + k_pos * k_vel * r,
        vv: ap10 * a10 + ap11 * a11 + k_vel * k_vel * r,
    };
    if !covariance.is_psd() {
        return Err(PerceptionError::Conditioning { track: track.id, detail: format!("{covariance:?}") });
    }
    Ok(Track {
        position: track.position + k_pos * innovation,
        velocity: track.velocity + k_vel * innovation,
        covariance,
        ..track.clone()
    })
}

/// Predicts over `dt`, then corrects with the detection if there is one.
/// Without a detection the track coasts and its miss count grows.
pub fn observer_update(
    track: &Track,
    detection: Option<&Detection>,
    dt: f64,
    params: &ObserverParams,
) -> Result<Track, PerceptionError> {
    if !(dt > 0.0) {
        return Err(PerceptionError::NonPositiveDt(dt));
    }
    let predicted = predict(track, dt, params);
    match detection {
        Some(det) => {
            let mut t = measure(&predicted, 0, det.position, det.variance)?;
            t.lane = det.lane;
            if det.class != super::ObjectClass::Unknown {
                t.class = det.class;
            }
            t.last_update = det.timestamp;
            t.miss_count = 0;
            t.hits = t.hits.saturating_add(1);
            Ok(t)
        }
        None => Ok(Track { miss_count: predicted.miss_count + 1, ..predicted }),
    }
}

/// Normalized estimation error squared against the true state.
pub fn nees(track: &Track, true_position: f64, true_velocity: f64) -> Option<f64> {
    let inv = track.covariance.inverse()?;
    let ep = track.position - true_position;
    let ev = track.velocity - true_velocity;
    Some(ep * ep * inv.pp + 2.0 * ep * ev * inv.pv + ev * ev * inv.vv)
}
