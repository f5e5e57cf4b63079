//! MSSP-side situational awareness.
//!
//! Each MSSP simulates its sensor pack, associates detections with tracks,
//! runs a constant-velocity observer per track, folds in SC self-reports and
//! neighbor shares, flags stalled vehicles and packages the result into SA
//! frames. Positions are 1-D along the corridor plus a lane index. MSSP
//! mounting positions are exact.

mod association;
mod frame;
mod incidents;
mod observer;
mod reconcile;
mod sensing;

use crate::ids::TrackId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use association::{associate, merge_detections, Association};
pub use frame::{compose_sa, write_track_csv, TrackCsvRow};
pub use incidents::{detect_incidents, IncidentThresholds, StallMonitor};
pub use observer::{nees, observer_update, predict, spawn_track, ObserverParams};
pub use reconcile::{reconcile, ReconcileParams};
pub use sensing::{sense, TruthObject};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("track {track}: covariance lost positive semidefiniteness ({detail})")]
    Conditioning { track: TrackId, detail: String },
    #[error("observer step requires dt > 0, got {0}")]
    NonPositiveDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Lidar,
    Radar,
    Optical,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub kind: SensorKind,
    /// Covered interval `[start, end]` along the corridor, metres.
    pub coverage: (f64, f64),
    pub noise_std: f64,
    pub detection_probability: f64,
    pub latency: f64,
    /// Probability that a detection's class hint is reported as unknown.
    #[serde(default)]
    pub class_confusion: f64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.noise_std >= 0.0) {
            return Err(format!("sensor noise std {} must be >= 0", self.noise_std));
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return Err(format!("detection probability {} outside [0,1]", self.detection_probability));
        }
        if !(0.0..=1.0).contains(&self.class_confusion) {
            return Err(format!("class confusion {} outside [0,1]", self.class_confusion));
        }
        if !(self.coverage.1 > self.coverage.0) {
            return Err(format!("sensor coverage {:?} is empty", self.coverage));
        }
        if !(self.latency >= 0.0) {
            return Err(format!("sensor latency {} must be >= 0", self.latency));
        }
        Ok(())
    }

    pub fn covers(&self, position: f64) -> bool {
        self.coverage.0 <= position && position <= self.coverage.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Bicycle,
    Unknown,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Unknown => "unknown",
        }
    }

    /// Nominal longitudinal extent behind the reported (front) position.
    pub fn nominal_length(self) -> f64 {
        match self {
            ObjectClass::Vehicle | ObjectClass::Unknown => 4.5,
            ObjectClass::Bicycle => 1.8,
            ObjectClass::Pedestrian => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sensor_id: u16,
    pub timestamp: f64,
    pub position: f64,
    pub lane: u8,
    pub class: ObjectClass,
    /// Measurement variance the observer should assume, m^2.
    pub variance: f64,
}

/// Symmetric 2x2 covariance of (position, velocity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub pp: f64,
    pub pv: f64,
    pub vv: f64,
}

impl Cov2 {
    pub fn diag(pp: f64, vv: f64) -> Self {
        Self { pp, pv: 0.0, vv }
    }

    pub fn trace(&self) -> f64 {
        self.pp + self.vv
    }

    pub fn det(&self) -> f64 {
        self.pp * self.vv - self.pv * self.pv
    }

    pub fn is_psd(&self) -> bool {
        let tol = 1e-12 * (1.0 + self.pp.abs() + self.vv.abs());
        self.pp >= -tol && self.vv >= -tol && self.det() >= -tol * (1.0 + self.trace().powi(2))
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        Some(Self { pp: self.vv / d, pv: -self.pv / d, vv: self.pp / d })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub class: ObjectClass,
    pub position: f64,
    pub velocity: f64,
    pub covariance: Cov2,
    pub lane: u8,
    pub last_update: f64,
    pub miss_count: u32,
    /// Number of measurement updates absorbed, including the spawning one.
    pub hits: u32,
}

impl Track {
    pub fn is_confirmed(&self, confirm_hits: u32) -> bool {
        self.hits >= confirm_hits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    StalledVehicle,
    Obstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub kind: IncidentKind,
    pub position: f64,
    pub lane: u8,
    pub onset: f64,
    pub confidence: f64,
    pub track_id: Option<TrackId>,
}

/// Tunables for the MSSP perception pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionParams {
    pub observer: ObserverParams,
    /// Association gate, metres.
    pub gate: f64,
    /// Updates needed before a track is published in SA frames.
    pub confirm_hits: u32,
    pub reconcile: ReconcileParams,
    pub incidents: IncidentThresholds,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            observer: ObserverParams::default(),
            gate: 3.0,
            confirm_hits: 3,
            reconcile: ReconcileParams::default(),
            incidents: IncidentThresholds::default(),
        }
    }
}
