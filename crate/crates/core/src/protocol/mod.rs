//! Level-1 SC <-> MSSP messaging plus the Level-2 neighbor share and
//! Level-3 incident upload message types.
//!
//! Registration is a two-message exchange (request, accept/reject). Handoff
//! is make-before-break: the SC registers with the next MSSP while the old
//! session stays live, and releases the old one only once accepted.

mod codec;
pub mod conformance;
mod handoff;
mod registry;
mod session;

use crate::ids::{MsspId, ScId, TrackId};
use crate::perception::{Incident, ObjectClass, Track};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{decode, encode, CodecError, MAGIC, PROTOCOL_VERSION};
pub use handoff::plan_handoff;
pub use registry::{mssp_handle, MsspRegistry, RegistryConfig, RegistryInput, Session};
pub use session::{sc_step, ScAction, ScEvent, ScSessionState, ScStep, SessionConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("position {0} m is outside every cell")]
    OutOfCorridor(f64),
}

/// Published view of one track inside an SA frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub track_id: TrackId,
    pub class: ObjectClass,
    pub position: f64,
    pub lane: u8,
    pub velocity: f64,
    pub position_variance: f64,
}

/// Situational-awareness frame broadcast by an MSSP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaFrame {
    pub frame_seq: u32,
    pub mssp_id: MsspId,
    pub timestamp: f64,
    pub tracks: Vec<TrackReport>,
    pub incidents: Vec<Incident>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DbwStatus {
    Ok,
    Degraded,
    Failed,
}

/// Self-awareness report sent by an SC about its own vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeaReport {
    pub sc_id: ScId,
    pub timestamp: f64,
    pub position: f64,
    pub lane: u8,
    pub speed: f64,
    pub dbw_status: DbwStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    Capacity,
    NotRegistered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlMessage {
    RegisterRequest { sc_id: ScId, position: f64 },
    RegisterAccept { mssp_id: MsspId, sc_id: ScId, slots: Vec<u16>, cell: (f64, f64) },
    RegisterReject { mssp_id: MsspId, sc_id: ScId, reason: RejectReason },
    HandoffInitiate { sc_id: ScId, target: MsspId },
    HandoffComplete { sc_id: ScId },
    Deregister { sc_id: ScId },
    NeighborTrackShare { from: MsspId, tracks: Vec<Track> },
    IncidentUpload { mssp_id: MsspId, incident: Incident },
}

impl ControlMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlMessage::RegisterRequest { .. } => "register_request",
            ControlMessage::RegisterAccept { .. } => "register_accept",
            ControlMessage::RegisterReject { .. } => "register_reject",
            ControlMessage::HandoffInitiate { .. } => "handoff_initiate",
            ControlMessage::HandoffComplete { .. } => "handoff_complete",
            ControlMessage::Deregister { .. } => "deregister",
            ControlMessage::NeighborTrackShare { .. } => "neighbor_track_share",
            ControlMessage::IncidentUpload { .. } => "incident_upload",
        }
    }
}

/// Anything that travels over a link and through the codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Control(ControlMessage),
    Sa(SaFrame),
    Sea(SeaReport),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Control(c) => c.kind(),
            Message::Sa(_) => "sa_frame",
            Message::Sea(_) => "sea_report",
        }
    }

    /// Human-readable rendering for traces and debugging.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string(self).expect("message serialization is infallible")
    }
}
