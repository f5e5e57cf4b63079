//! Binary wire format.
//!
//! ```text
//! offset  size  field
//! 0       2     magic "IE" (0x49 0x45)
//! 2       1     protocol version (1)
//! 3       1     variant tag
//! 4       4     payload length, little-endian u32
//! 8       len   payload
//! ```
//!
//! All integers and IEEE-754 doubles are little-endian. Lists are prefixed
//! by a `u16` count, optional track ids by a `0/1` byte. Per-variant payload
//! field order:
//!
//! | tag  | variant            | fields                                                    |
//! |------|--------------------|-----------------------------------------------------------|
//! | 0x01 | RegisterRequest    | sc u32, position f64                                      |
//! | 0x02 | RegisterAccept     | mssp u16, sc u32, slots [u16], cell_start f64, cell_end f64 |
//! | 0x03 | RegisterReject     | mssp u16, sc u32, reason u8                               |
//! | 0x04 | HandoffInitiate    | sc u32, target u16                                        |
//! | 0x05 | HandoffComplete    | sc u32                                                    |
//! | 0x06 | Deregister         | sc u32                                                    |
//! | 0x07 | NeighborTrackShare | from u16, tracks [track]                                  |
//! | 0x08 | IncidentUpload     | mssp u16, incident                                        |
//! | 0x10 | SaFrame            | seq u32, mssp u16, time f64, [track report], [incident]   |
//! | 0x11 | SeaReport          | sc u32, time f64, position f64, lane u8, speed f64, dbw u8 |
//!
//! `track` = id u32, class u8, position f64, velocity f64, var_pp f64,
//! var_pv f64, var_vv f64, lane u8, last_update f64, misses u32, hits u32.
//! `track report` = id u32, class u8, position f64, lane u8, velocity f64,
//! position variance f64. `incident` = kind u8, position f64, lane u8,
//! onset f64, confidence f64, optional track id.

use super::{ControlMessage, DbwStatus, Message, RejectReason, SaFrame, SeaReport, TrackReport};
use crate::ids::{MsspId, ScId, TrackId};
use crate::perception::{Cov2, Incident, IncidentKind, ObjectClass, Track};
use thiserror::Error;

pub const MAGIC: [u8; 2] = *b"IE";
pub const PROTOCOL_VERSION: u8 = 1;
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("unsupported protocol version {found} (expected {PROTOCOL_VERSION})")]
    Version { found: u8 },
}

fn tag_of(msg: &Message) -> u8 {
    match msg {
        Message::Control(c) => match c {
            ControlMessage::RegisterRequest { .. } => 0x01,
            ControlMessage::RegisterAccept { .. } => 0x02,
            ControlMessage::RegisterReject { .. } => 0x03,
            ControlMessage::HandoffInitiate { .. } => 0x04,
            ControlMessage::HandoffComplete { .. } => 0x05,
            ControlMessage::Deregister { .. } => 0x06,
            ControlMessage::NeighborTrackShare { .. } => 0x07,
            ControlMessage::IncidentUpload { .. } => 0x08,
        },
        Message::Sa(_) => 0x10,
        Message::Sea(_) => 0x11,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn count(&mut self, n: usize) {
        self.u16(u16::try_from(n).expect("list longer than u16::MAX entries"));
    }
    fn class(&mut self, c: ObjectClass) {
        self.u8(match c {
            ObjectClass::Vehicle => 0,
            ObjectClass::Pedestrian => 1,
            ObjectClass::Bicycle => 2,
            ObjectClass::Unknown => 3,
        });
    }
    fn track(&mut self, t: &Track) {
        self.u32(t.id.0);
        self.class(t.class);
        self.f64(t.position);
        self.f64(t.velocity);
        self.f64(t.covariance.pp);
        self.f64(t.covariance.pv);
        self.f64(t.covariance.vv);
        self.u8(t.lane);
        self.f64(t.last_update);
        self.u32(t.miss_count);
        self.u32(t.hits);
    }
    fn incident(&mut self, i: &Incident) {
        self.u8(match i.kind {
            IncidentKind::StalledVehicle => 0,
            IncidentKind::Obstruction => 1,
        });
        self.f64(i.position);
        self.u8(i.lane);
        self.f64(i.onset);
        self.f64(i.confidence);
        match i.track_id {
            Some(id) => {
                self.u8(1);
                self.u32(id.0);
            }
            None => self.u8(0),
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64));
    match msg {
        Message::Control(c) => match c {
            ControlMessage::RegisterRequest { sc_id, position } => {
                w.u32(sc_id.0);
                w.f64(*position);
            }
            ControlMessage::RegisterAccept { mssp_id, sc_id, slots, cell } => {
                w.u16(mssp_id.0);
                w.u32(sc_id.0);
                w.count(slots.len());
                slots.iter().for_each(|&s| w.u16(s));
                w.f64(cell.0);
                w.f64(cell.1);
            }
            ControlMessage::RegisterReject { mssp_id, sc_id, reason } => {
                w.u16(mssp_id.0);
                w.u32(sc_id.0);
                w.u8(match reason {
                    RejectReason::Capacity => 0,
                    RejectReason::NotRegistered => 1,
                });
            }
            ControlMessage::HandoffInitiate { sc_id, target } => {
                w.u32(sc_id.0);
                w.u16(target.0);
            }
            ControlMessage::HandoffComplete { sc_id } | ControlMessage::Deregister { sc_id } => w.u32(sc_id.0),
            ControlMessage::NeighborTrackShare { from, tracks } => {
                w.u16(from.0);
                w.count(tracks.len());
                tracks.iter().for_each(|t| w.track(t));
            }
            ControlMessage::IncidentUpload { mssp_id, incident } => {
                w.u16(mssp_id.0);
                w.incident(incident);
            }
        },
        Message::Sa(f) => {
            w.u32(f.frame_seq);
            w.u16(f.mssp_id.0);
            w.f64(f.timestamp);
            w.count(f.tracks.len());
            for t in &f.tracks {
                w.u32(t.track_id.0);
                w.class(t.class);
                w.f64(t.position);
                w.u8(t.lane);
                w.f64(t.velocity);
                w.f64(t.position_variance);
            }
            w.count(f.incidents.len());
            f.incidents.iter().for_each(|i| w.incident(i));
        }
        Message::Sea(s) => {
            w.u32(s.sc_id.0);
            w.f64(s.timestamp);
            w.f64(s.position);
            w.u8(s.lane);
            w.f64(s.speed);
            w.u8(match s.dbw_status {
                DbwStatus::Ok => 0,
                DbwStatus::Degraded => 1,
                DbwStatus::Failed => 2,
            });
        }
    }
    let payload = w.0;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(PROTOCOL_VERSION);
    out.push(tag_of(msg));
    out.extend_from_slice(&u32::try_from(payload.len()).expect("payload fits u32").to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, CodecError> {
        Err(CodecError::Decode { offset: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!("truncated: need {n} bytes, {} left", self.buf.len() - self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(CodecError::Decode { offset: at, reason: "non-finite number".into() });
        }
        Ok(v)
    }
    fn f64_at_least(&mut self, min: f64, what: &str) -> Result<f64, CodecError> {
        let at = self.pos;
        let v = self.f64()?;
        if v < min {
            return Err(CodecError::Decode { offset: at, reason: format!("{what} {v} below {min}") });
        }
        Ok(v)
    }
    fn enum_u8(&mut self, max: u8, what: &str) -> Result<u8, CodecError> {
        let at = self.pos;
        let v = self.u8()?;
        if v > max {
            return Err(CodecError::Decode { offset: at, reason: format!("invalid {what} {v}") });
        }
        Ok(v)
    }
    fn class(&mut self) -> Result<ObjectClass, CodecError> {
        Ok(match self.enum_u8(3, "object class")? {
            0 => ObjectClass::Vehicle,
            1 => ObjectClass::Pedestrian,
            2 => ObjectClass::Bicycle,
            _ => ObjectClass::Unknown,
        })
    }
    fn list<T>(
        &mut self,
        min_item: usize,
        mut item: impl FnMut(&mut Self) -> Result<T, CodecError>,
    ) -> Result<Vec<T>, CodecError> {
        let n = usize::from(self.u16()?);
        if (self.buf.len() - self.pos) < n * min_item {
            return self.fail(format!("truncated: list of {n} entries"));
        }
        (0..n).map(|_| item(self)).collect()
    }
    fn track(&mut self) -> Result<Track, CodecError> {
        Ok(Track {
            id: TrackId(self.u32()?),
            class: self.class()?,
            position: self.f64()?,
            velocity: self.f64()?,
            covariance: Cov2 {
                pp: self.f64_at_least(0.0, "variance")?,
                pv: self.f64()?,
                vv: self.f64_at_least(0.0, "variance")?,
            },
            lane: self.u8()?,
            last_update: self.f64()?,
            miss_count: self.u32()?,
            hits: self.u32()?,
        })
    }
    fn incident(&mut self) -> Result<Incident, CodecError> {
        let kind = match self.enum_u8(1, "incident kind")? {
            0 => IncidentKind::StalledVehicle,
            _ => IncidentKind::Obstruction,
        };
        let position = self.f64()?;
        let lane = self.u8()?;
        let onset = self.f64()?;
        let at = self.pos;
        let confidence = self.f64()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(CodecError::Decode { offset: at, reason: format!("confidence {confidence} outside [0,1]") });
        }
        let track_id = match self.enum_u8(1, "option flag")? {
            1 => Some(TrackId(self.u32()?)),
            _ => None,
        };
        Ok(Incident { kind, position, lane, onset, confidence, track_id })
    }
}

/// Decodes exactly one message occupying the whole buffer. Never panics.
pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(2)?;
    if magic != MAGIC {
        return Err(CodecError::Decode { offset: 0, reason: "bad magic".into() });
    }
    let version = r.u8()?;
    if version != PROTOCOL_VERSION {
        return Err(CodecError::Version { found: version });
    }
    let tag_at = r.pos;
    let tag = r.u8()?;
    let len = r.u32()? as usize;
    if bytes.len() - HEADER_LEN != len {
        return Err(CodecError::Decode {
            offset: 4,
            reason: format!("payload length {len} but {} bytes follow the header", bytes.len() - HEADER_LEN),
        });
    }
    let msg = match tag {
        0x01 => Message::Control(ControlMessage::RegisterRequest { sc_id: ScId(r.u32()?), position: r.f64()? }),
        0x02 => {
            let mssp_id = MsspId(r.u16()?);
            let sc_id = ScId(r.u32()?);
            let slots = r.list(2, |r| r.u16())?;
            let start = r.f64()?;
            let end = r.f64()?;
            Message::Control(ControlMessage::RegisterAccept { mssp_id, sc_id, slots, cell: (start, end) })
        }
        0x03 => {
            let mssp_id = MsspId(r.u16()?);
            let sc_id = ScId(r.u32()?);
            let reason = match r.enum_u8(1, "reject reason")? {
                0 => RejectReason::Capacity,
                _ => RejectReason::NotRegistered,
            };
            Message::Control(ControlMessage::RegisterReject { mssp_id, sc_id, reason })
        }
        0x04 => Message::Control(ControlMessage::HandoffInitiate { sc_id: ScId(r.u32()?), target: MsspId(r.u16()?) }),
        0x05 => Message::Control(ControlMessage::HandoffComplete { sc_id: ScId(r.u32()?) }),
        0x06 => Message::Control(ControlMessage::Deregister { sc_id: ScId(r.u32()?) }),
        0x07 => {
            let from = MsspId(r.u16()?);
            let tracks = r.list(62, |r| r.track())?;
            Message::Control(ControlMessage::NeighborTrackShare { from, tracks })
        }
        0x08 => {
            let mssp_id = MsspId(r.u16()?);
            Message::Control(ControlMessage::IncidentUpload { mssp_id, incident: r.incident()? })
        }
        0x10 => {
            let frame_seq = r.u32()?;
            let mssp_id = MsspId(r.u16()?);
            let timestamp = r.f64()?;
            let tracks = r.list(30, |r| {
                Ok(TrackReport {
                    track_id: TrackId(r.u32()?),
                    class: r.class()?,
                    position: r.f64()?,
                    lane: r.u8()?,
                    velocity: r.f64()?,
                    position_variance: r.f64_at_least(0.0, "variance")?,
                })
            })?;
            let incidents = r.list(27, |r| r.incident())?;
            Message::Sa(SaFrame { frame_seq, mssp_id, timestamp, tracks, incidents })
        }
        0x11 => {
            let sc_id = ScId(r.u32()?);
            let timestamp = r.f64()?;
            let position = r.f64()?;
            let lane = r.u8()?;
            let speed = r.f64_at_least(0.0, "speed")?;
            let dbw_status = match r.enum_u8(2, "dbw status")? {
                0 => DbwStatus::Ok,
                1 => DbwStatus::Degraded,
                _ => DbwStatus::Failed,
            };
            Message::Sea(SeaReport { sc_id, timestamp, position, lane, speed, dbw_status })
        }
        other => {
            return Err(CodecError::Decode { offset: tag_at, reason: format!("unknown variant tag {other:#04x}") })
        }
    };
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing payload bytes", bytes.len() - r.pos));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Message {
        Message::Control(ControlMessage::RegisterAccept {
            mssp_id: MsspId(2),
            sc_id: ScId(11),
            slots: vec![4, 5],
            cell: (450.0, 950.0),
        })
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..2], b"IE");
        assert_eq!(bytes[2], PROTOCOL_VERSION);
        assert_eq!(bytes[3], 0x02);
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 8);
        // mssp id, little-endian.
        assert_eq!(&bytes[8..10], &[2, 0]);
    }

    #[test]
    fn empty_input_is_a_decode_error() {
        assert!(matches!(decode(&[]), Err(CodecError::Decode { offset: 0, .. })));
    }

    #[test]
    fn flipped_version_is_a_version_error() {
        let mut bytes = encode(&sample());
        bytes[2] ^= 0xFF;
        assert_eq!(decode(&bytes), Err(CodecError::Version { found: PROTOCOL_VERSION ^ 0xFF }));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&sample());
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CodecError::Decode { offset: 4, .. }), "{err:?}");
        let mut short = bytes.clone();
        short.truncate(12);
        short[4..8].copy_from_slice(&4u32.to_le_bytes());
        // mssp id fits, the sc id starting at byte 10 does not.
        assert!(matches!(decode(&short), Err(CodecError::Decode { offset: 10, .. })));
    }

    #[test]
    fn negative_speed_rejected() {
        let mut bytes = encode(&Message::Sea(SeaReport {
            sc_id: ScId(1),
            timestamp: 0.0,
            position: 1.0,
            lane: 0,
            speed: 3.0,
            dbw_status: DbwStatus::Ok,
        }));
        // speed sits after sc(4) + time(8) + position(8) + lane(1).
        bytes[8 + 21..8 + 29].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(decode(&bytes), Err(CodecError::Decode { offset: 29, .. })));
    }
}
