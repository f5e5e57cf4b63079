use super::scenario::OutcomeClassifierConfig;
use super::trace::ImpactClass;
use super::vehicle::VehicleState;
use super::EpisodeTrace;
use crate::risk::OutcomeSpace;
use serde::{Deserialize, Serialize};

/// Episode outcomes in ascending severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeLabel {
    /// No accident and no near miss.
    S1,
    /// Near miss: time-to-collision under the threshold without contact.
    S2,
    /// Contact below the severe impact speed.
    S3,
    /// Severe collision.
    S4,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] = [OutcomeLabel::S1, OutcomeLabel::S2, OutcomeLabel::S3, OutcomeLabel::S4];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::S1 => "s1",
            OutcomeLabel::S2 => "s2",
            OutcomeLabel::S3 => "s3",
            OutcomeLabel::S4 => "s4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    pub fn space() -> OutcomeSpace {
        OutcomeSpace::from_labels(Self::ALL.map(|l| l.as_str())).expect("labels are unique")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub a: u32,
    pub b: u32,
    /// Absolute speed difference at first contact, m/s.
    pub dv: f64,
    pub class: ImpactClass,
}

pub fn impact_class(dv: f64, cfg: &OutcomeClassifierConfig) -> ImpactClass {
    if dv >= cfg.severe_dv {
        ImpactClass::Severe
    } else if dv >= cfg.minor_dv {
        ImpactClass::Minor
    } else {
        ImpactClass::Graze
    }
}

fn lanes_overlap(a: &VehicleState, b: &VehicleState) -> bool {
    a.occupies(b.lane)
        || b.occupies(a.lane)
        || a.lane_change.zip(b.lane_change).is_some_and(|(x, y)| x.target == y.target)
}

/// True when the two bodies share a lane and overlap longitudinally. The
/// relation is symmetric.
pub fn in_contact(a: &VehicleState, b: &VehicleState) -> bool {
    lanes_overlap(a, b) && a.rear() < b.position && b.rear() < a.position
}

/// Time until the follower of the pair reaches the leader at current speeds,
/// if they share a lane, are apart and are closing.
pub fn time_to_collision(a: &VehicleState, b: &VehicleState) -> Option<f64> {
    if !lanes_overlap(a, b) {
        return None;
    }
    let (follower, leader) = if a.position <= b.position { (a, b) } else { (b, a) };
    let gap = leader.rear() - follower.position;
    let closing = follower.speed - leader.speed;
    (gap > 0.0 && closing > 0.0).then(|| gap / closing)
}

pub fn classify(collisions: &[CollisionEvent], min_ttc: Option<f64>, cfg: &OutcomeClassifierConfig) -> OutcomeLabel {
    if collisions.iter().any(|c| c.dv >= cfg.severe_dv) {
        OutcomeLabel::S4
    } else if !collisions.is_empty() {
        OutcomeLabel::S3
    } else if min_ttc.is_some_and(|t| t < cfg.ttc_near_miss) {
        OutcomeLabel::S2
    } else {
        OutcomeLabel::S1
    }
}

/// Maps a finished episode to its severity class.
pub fn classify_outcome(trace: &EpisodeTrace, cfg: &OutcomeClassifierConfig) -> OutcomeLabel {
    classify(&trace.collisions, trace.min_ttc, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::vehicle::VehicleKind;

    fn hit(dv: f64) -> CollisionEvent {
        CollisionEvent { t: 1.0, a: 1, b: 2, dv, class: impact_class(dv, &OutcomeClassifierConfig::default()) }
    }

    #[test]
    fn threshold_rules() {
        let cfg = OutcomeClassifierConfig::default();
        assert_eq!(classify(&[], None, &cfg), OutcomeLabel::S1);
        assert_eq!(classify(&[], Some(0.8), &cfg), OutcomeLabel::S2);
        assert_eq!(classify(&[], Some(1.0), &cfg), OutcomeLabel::S1);
        assert_eq!(classify(&[hit(3.0)], Some(0.1), &cfg), OutcomeLabel::S3);
        assert_eq!(classify(&[hit(3.0), hit(9.0)], None, &cfg), OutcomeLabel::S4);
    }

    #[test]
    fn contact_is_symmetric() {
        let a = VehicleState::new(1, VehicleKind::Manual, 100.0, 0, 10.0);
        let mut b = VehicleState::new(2, VehicleKind::Manual, 103.0, 0, 12.0);
        assert!(in_contact(&a, &b) && in_contact(&b, &a));
        b.lane = 1;
        assert!(!in_contact(&a, &b) && !in_contact(&b, &a));
    }

    #[test]
    fn ttc_of_closing_pair() {
        let a = VehicleState::new(1, VehicleKind::Manual, 100.0, 0, 20.0);
        let b = VehicleState::new(2, VehicleKind::Manual, 114.5, 0, 10.0);
        assert_eq!(time_to_collision(&a, &b), Some(1.0));
        assert_eq!(time_to_collision(&b, &a), Some(1.0));
    }
}
