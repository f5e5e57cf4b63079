//! Scenario configuration, read from TOML.

use super::vehicle::{DbwEnvelope, DriverParams, VehicleKind};
use super::SimError;
use crate::ids::MsspId;
use crate::perception::{PerceptionParams, SensorSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    pub length: f64,
    pub lanes: u8,
    #[serde(default)]
    pub take_over_spots: Vec<f64>,
    #[serde(default)]
    pub entry: f64,
    /// Vehicles leave the simulation once their front passes this point.
    /// Defaults to `length`.
    #[serde(default)]
    pub exit: Option<f64>,
    /// Minimum overlap between consecutive MSSP cells, metres.
    #[serde(default)]
    pub min_overlap: f64,
}

impl Corridor {
    pub fn exit(&self) -> f64 {
        self.exit.unwrap_or(self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsspPlacement {
    pub id: MsspId,
    /// Mounting position, metres. Informational; coverage drives behaviour.
    pub position: f64,
    pub coverage: (f64, f64),
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
}

fn default_capacity() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    /// One-way delivery latency for every link, s.
    pub latency: f64,
    /// Independent per-message loss probability on SC links.
    pub loss: f64,
    pub sea_period: f64,
    pub sa_period: f64,
    pub registration_timeout: f64,
    pub backoff_base: f64,
    pub backoff_max: f64,
    /// Missed SeA periods before an MSSP evicts a session.
    pub evict_periods: u32,
    /// Look-ahead used to decide when to start a handoff, s.
    pub handoff_lead: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            latency: 0.02,
            loss: 0.0,
            sea_period: 0.1,
            sa_period: 0.1,
            registration_timeout: 0.5,
            backoff_base: 0.1,
            backoff_max: 2.0,
            evict_periods: 3,
            handoff_lead: 2.0,
        }
    }
}

impl NetworkParams {
    pub fn t_evict(&self) -> f64 {
        f64::from(self.evict_periods) * self.sea_period
    }

    pub fn rtt(&self) -> f64 {
        2.0 * self.latency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    pub kind: VehicleKind,
    pub lane: u8,
    pub position: f64,
    pub speed: f64,
    /// Time the vehicle appears, s.
    #[serde(default)]
    pub entry_time: f64,
    /// Cruise speed. IDM desired speed for manual traffic, policy target for
    /// IEA vehicles; defaults to the policy target.
    #[serde(default)]
    pub desired_speed: Option<f64>,
    /// Manual vehicles brake to a standstill from this time on.
    #[serde(default)]
    pub stall_at: Option<f64>,
    /// IEA vehicles request a take-over at this time.
    #[serde(default)]
    pub disengage_at: Option<f64>,
}

/// Poisson traffic injected at the corridor entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrivals {
    /// Vehicles per second.
    pub rate: f64,
    /// No arrivals after this time, s.
    pub until: f64,
    #[serde(default = "half")]
    pub iea_fraction: f64,
    pub speed: f64,
    #[serde(default)]
    pub lane: u8,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub target_speed: f64,
    /// Standstill gap, m.
    pub s0: f64,
    /// Time headway added to the safe gap, s.
    pub headway: f64,
    /// Extra gap a target lane must offer before changing into it, m.
    pub hysteresis: f64,
    /// Horizon over which the gap to the leader is predicted, s.
    pub prediction_horizon: f64,
    /// SA older than this is stale, s.
    pub t_stale: f64,
    /// Deceleration applied while SA is stale, m/s^2.
    pub stale_decel: f64,
    /// Deceleration used to plan a stop before an incident, m/s^2.
    pub comfort_decel: f64,
    /// A same-lane track this close to the SC's own position is its own.
    pub self_gate: f64,
    /// Stalled-vehicle incidents beyond this distance are ignored, m.
    pub incident_lookahead: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            target_speed: 25.0,
            s0: 2.0,
            headway: 1.5,
            hysteresis: 5.0,
            prediction_horizon: 2.0,
            t_stale: 0.5,
            stale_decel: 2.0,
            comfort_decel: 3.0,
            self_gate: 4.5,
            incident_lookahead: 150.0,
        }
    }
}

impl PolicyParams {
    pub fn safe_gap(&self, speed: f64) -> f64 {
        self.s0 + speed.max(0.0) * self.headway
    }
}

/// How each responsibility component misbehaves when its fault bit is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultParams {
    /// Per-tick probability that the DBW ignores the command.
    pub q_dbw: f64,
    /// Per-tick, per-track dropout probability in published SA.
    pub q_sa: f64,
    /// Position bias added to every published track, m.
    pub b_sa: f64,
    /// Per-tick probability that the decision module inverts its command.
    pub q_dec: f64,
}

impl Default for FaultParams {
    fn default() -> Self {
        Self { q_dbw: 0.3, q_sa: 0.3, b_sa: 2.0, q_dec: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeClassifierConfig {
    pub ttc_near_miss: f64,
    pub minor_dv: f64,
    pub severe_dv: f64,
}

impl Default for OutcomeClassifierConfig {
    fn default() -> Self {
        Self { ttc_near_miss: 1.0, minor_dv: 1.0, severe_dv: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Episode length, s.
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub corridor: Corridor,
    pub mssp: Vec<MsspPlacement>,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub arrivals: Option<Arrivals>,
    #[serde(default)]
    pub policy: PolicyParams,
    #[serde(default)]
    pub envelope: DbwEnvelope,
    #[serde(default)]
    pub driver: DriverParams,
    #[serde(default)]
    pub faults: FaultParams,
    #[serde(default)]
    pub classifier: OutcomeClassifierConfig,
    #[serde(default)]
    pub perception: PerceptionParams,
}

fn default_dt() -> f64 {
    0.1
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Cells as `(id, coverage)` sorted by coverage start.
    pub fn cells(&self) -> Vec<(MsspId, (f64, f64))> {
        let mut cells: Vec<_> = self.mssp.iter().map(|m| (m.id, m.coverage)).collect();
        cells.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
        cells
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !pos(self.horizon) || !pos(self.dt) {
            return bad(format!("horizon {} and dt {} must be positive", self.horizon, self.dt));
        }
        let c = &self.corridor;
        if !pos(c.length) || c.lanes == 0 {
            return bad("corridor needs positive length and at least one lane".into());
        }
        if !(0.0 <= c.entry && c.entry < c.exit() && c.exit() <= c.length) {
            return bad(format!("entry {} / exit {} must lie in [0, {}] in order", c.entry, c.exit(), c.length));
        }
        if let Some(s) = c.take_over_spots.iter().find(|s| !(0.0..=c.length).contains(*s)) {
            return bad(format!("take-over spot {s} lies outside the corridor"));
        }
        if self.mssp.is_empty() {
            return bad("at least one [[mssp]] is required".into());
        }
        let mut ids: Vec<_> = self.mssp.iter().map(|m| m.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.mssp.len() {
            return bad("mssp ids must be unique".into());
        }
        for m in &self.mssp {
            if !(m.coverage.1 > m.coverage.0) {
                return bad(format!("{} coverage {:?} is empty", m.id, m.coverage));
            }
            if m.capacity == 0 {
                return bad(format!("{} capacity must be positive", m.id));
            }
            for s in &m.sensors {
                s.validate().map_err(|e| SimError::Config(format!("{}: {e}", m.id)))?;
            }
        }
        let cells = self.cells();
        if cells[0].1 .0 > 0.0 || cells[cells.len() - 1].1 .1 < c.length {
            return bad(format!("cells must cover [0, {}]", c.length));
        }
        for w in cells.windows(2) {
            let overlap = w[0].1 .1 - w[1].1 .0;
            if overlap < c.min_overlap {
                return bad(format!("{} and {} overlap by {overlap} m, need {}", w[0].0, w[1].0, c.min_overlap));
            }
        }
        let n = &self.network;
        if !(n.latency >= 0.0) || !prob(n.loss) || !pos(n.sea_period) || !pos(n.sa_period) {
            return bad("network latency/loss/periods out of range".into());
        }
        if !pos(n.registration_timeout)
            || !pos(n.backoff_base)
            || n.backoff_max < n.backoff_base
            || n.evict_periods == 0
        {
            return bad("network timeouts must be positive with backoff_max >= backoff_base".into());
        }
        if !(n.handoff_lead >= 0.0) {
            return bad("handoff_lead must be >= 0".into());
        }
        let mut vids: Vec<u32> = self.vehicles.iter().map(|v| v.id).collect();
        vids.sort_unstable();
        vids.dedup();
        if vids.len() != self.vehicles.len() {
            return bad("vehicle ids must be unique".into());
        }
        for v in &self.vehicles {
            if v.lane >= c.lanes {
                return bad(format!("vehicle {} lane {} out of range", v.id, v.lane));
            }
            if !(0.0..=c.length).contains(&v.position) || !(v.speed >= 0.0) || !(v.speed <= v.kind.v_max()) {
                return bad(format!("vehicle {} position/speed out of range", v.id));
            }
            if v.id >= ARRIVAL_ID_BASE {
                return bad(format!("vehicle ids must be below {ARRIVAL_ID_BASE}"));
            }
        }
        if let Some(a) = &self.arrivals {
            if !(a.rate >= 0.0) || !prob(a.iea_fraction) || a.lane >= c.lanes || !(a.speed >= 0.0) {
                return bad("arrivals rate/fraction/lane/speed out of range".into());
            }
        }
        let p = &self.policy;
        if !pos(p.target_speed) || p.s0 < 0.0 || p.headway < 0.0 || !pos(p.t_stale) || !pos(p.self_gate) {
            return bad("policy parameters out of range".into());
        }
        self.envelope.validate().map_err(SimError::Config)?;
        self.driver.validate().map_err(SimError::Config)?;
        let f = &self.faults;
        if !prob(f.q_dbw) || !prob(f.q_sa) || !prob(f.q_dec) || !f.b_sa.is_finite() {
            return bad("fault probabilities must lie in [0,1]".into());
        }
        let k = &self.classifier;
        if !(0.0 < k.ttc_near_miss && 0.0 <= k.minor_dv && k.minor_dv < k.severe_dv) {
            return bad("classifier thresholds must satisfy 0 <= minor_dv < severe_dv and ttc > 0".into());
        }
        Ok(())
    }
}

/// Ids of Poisson arrivals start here.
pub const ARRIVAL_ID_BASE: u32 = 1_000_000;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
horizon = 10.0
[corridor]
length = 900.0
lanes = 2
min_overlap = 50.0
[[mssp]]
id = 1
position = 250.0
coverage = [0.0, 500.0]
[[mssp]]
id = 2
position = 700.0
coverage = [450.0, 900.0]
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(s.dt, 0.1);
        assert_eq!(s.network.registration_timeout, 0.5);
        assert!((s.network.t_evict() - 0.3).abs() < 1e-12);
        assert_eq!(s.faults.q_dbw, 0.3);
        assert_eq!(s.classifier.severe_dv, 8.0);
        assert_eq!(s.mssp[0].capacity, 16);
    }

    #[test]
    fn gaps_in_coverage_are_rejected() {
        let text = MINIMAL.replace("[450.0, 900.0]", "[480.0, 900.0]");
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(SimError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("lanes = 2", "lanes = 2\nlanez = 3");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }
}
