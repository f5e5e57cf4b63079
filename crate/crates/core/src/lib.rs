//! Corridor simulator for infrastructure-enabled autonomy and the Bayesian
//! blame-attribution engine that scores its failures.

// Negated comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ids;
pub mod perception;
pub mod protocol;
pub mod risk;
pub mod sim;

pub use ids::{MsspId, ScId, TrackId};
pub use perception::{Detection, Incident, ObjectClass, SensorSpec, Track};
pub use protocol::{ControlMessage, Message, SaFrame, SeaReport};
pub use risk::{FaultConfig, FaultModel, OutcomeLikelihood, OutcomeSpace, RiskReport};
