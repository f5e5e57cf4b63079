//! Deterministic fixed-step corridor simulation.
//!
//! Vehicles, MSSP perception, the SC/MSSP protocol and fault injection are
//! stepped together every `dt`. Each subsystem draws from its own random
//! stream derived from the episode seed.

mod decision;
mod episode;
mod estimate;
mod network;
mod outcome;
mod scenario;
mod trace;
mod vehicle;

use crate::perception::PerceptionError;
use crate::risk::RiskError;
use thiserror::Error;

pub use decision::{invert_command, sc_decide, Decision, DecisionReason};
pub use episode::{run_episode, run_episode_with, EpisodeStats, EpisodeTrace, FaultAssignment};
pub use estimate::{
    episode_seed, estimate_outcome_likelihood, wilson_half_width, EmpiricalLikelihood, EpisodeRow, Estimate,
};
pub use network::{Delivery, Endpoint, Network, SendReceipt};
pub use outcome::{
    classify, classify_outcome, impact_class, in_contact, time_to_collision, CollisionEvent, OutcomeLabel,
};
pub use scenario::{
    Arrivals, Corridor, FaultParams, MsspPlacement, NetworkParams, OutcomeClassifierConfig, PolicyParams,
    ScenarioConfig, VehicleSpec, ARRIVAL_ID_BASE,
};
pub use trace::{
    format_hash, hash_records, replay_trace, replay_trace_file, write_trace, write_trace_file, ImpactClass, KindLimits,
    ReplaySummary, TraceDetail, TraceEvent, TraceHasher, TraceRecord, TrackRecord, VehicleRecord, Violation,
};
pub use vehicle::{
    execute_dbw, manual_driver, step_vehicle, Actuation, DbwCommand, DbwEnvelope, DbwRejection, DbwResult, DriveMode,
    DriverParams, LaneChange, LaneDir, VehicleKind, VehicleState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("record {index}: {reason}")]
    Integrity { index: usize, reason: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}
