use super::{Incident, Track};
use crate::ids::MsspId;
use crate::protocol::{SaFrame, TrackReport};
use serde::Serialize;
use std::io::Write;

/// Packages every confirmed, in-coverage track into the next SA frame.
pub fn compose_sa(
    tracks: &[Track],
    incidents: &[Incident],
    mssp_id: MsspId,
    prev_seq: u32,
    now: f64,
    coverage: (f64, f64),
    confirm_hits: u32,
) -> SaFrame {
    SaFrame {
        frame_seq: prev_seq.wrapping_add(1),
        mssp_id,
        timestamp: now,
        tracks: tracks
            .iter()
            .filter(|t| t.is_confirmed(confirm_hits) && coverage.0 <= t.position && t.position <= coverage.1)
            .map(TrackReport::from)
            .collect(),
        incidents: incidents.iter().filter(|i| coverage.0 <= i.position && i.position <= coverage.1).cloned().collect(),
    }
}

impl From<&Track> for TrackReport {
    fn from(t: &Track) -> Self {
        TrackReport {
            track_id: t.id,
            class: t.class,
            position: t.position,
            lane: t.lane,
            velocity: t.velocity,
            position_variance: t.covariance.pp,
        }
    }
}

/// One row of the offline track dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackCsvRow {
    pub time: f64,
    pub mssp: u16,
    pub track_id: u32,
    pub class: &'static str,
    pub pos: f64,
    pub vel: f64,
    pub var_pos: f64,
    pub var_vel: f64,
}

impl TrackCsvRow {
    pub fn new(time: f64, mssp: MsspId, t: &Track) -> Self {
        Self {
            time,
            mssp: mssp.0,
            track_id: t.id.0,
            class: t.class.as_str(),
            pos: t.position,
            vel: t.velocity,
            var_pos: t.covariance.pp,
            var_vel: t.covariance.vv,
        }
    }
}

pub fn write_track_csv<W: Write>(out: W, rows: &[TrackCsvRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["time", "mssp", "track_id", "class", "pos", "vel", "var_pos", "var_vel"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
