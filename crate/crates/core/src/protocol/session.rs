//! SC-side session state machine.
//!
//! `sc_step` is total over (state, event): pairs without a defined
//! transition leave the state unchanged and emit nothing.

use super::{ControlMessage, RejectReason, SaFrame};
use crate::ids::{MsspId, ScId};
use log::trace;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Time to wait for a register accept before giving up, s.
    pub registration_timeout: f64,
    /// First retry delay after a failed attempt; doubles per attempt, s.
    pub backoff_base: f64,
    pub backoff_max: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { registration_timeout: 0.5, backoff_base: 0.1, backoff_max: 2.0 }
    }
}

impl SessionConfig {
    pub fn backoff(&self, attempts: u32) -> f64 {
        let exp = attempts.saturating_sub(1).min(30);
        (self.backoff_base * f64::from(1u32 << exp)).min(self.backoff_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScSessionState {
    Unregistered { pending: Option<MsspId>, attempts: u32, retry_at: f64 },
    Registering { target: MsspId, deadline: f64, attempts: u32 },
    Registered { mssp: MsspId, last_sa_time: f64 },
    HandingOff { old: MsspId, new: MsspId, deadline: f64 },
    Disengaged,
}

impl Default for ScSessionState {
    fn default() -> Self {
        ScSessionState::Unregistered { pending: None, attempts: 0, retry_at: 0.0 }
    }
}

impl ScSessionState {
    /// When the simulator should deliver the next `Timeout`, if ever.
    pub fn deadline(&self) -> Option<f64> {
        match self {
            ScSessionState::Unregistered { pending: Some(_), retry_at, .. } => Some(*retry_at),
            ScSessionState::Registering { deadline, .. } | ScSessionState::HandingOff { deadline, .. } => {
                Some(*deadline)
            }
            _ => None,
        }
    }

    /// The MSSP whose SA may feed decision making right now.
    pub fn sa_source(&self) -> Option<MsspId> {
        match self {
            ScSessionState::Registered { mssp, .. } => Some(*mssp),
            ScSessionState::HandingOff { old, .. } => Some(*old),
            _ => None,
        }
    }

    /// The MSSP that should receive self-reports.
    pub fn serving(&self) -> Option<MsspId> {
        self.sa_source()
    }

    pub fn is_registered(&self) -> bool {
        self.sa_source().is_some()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScSessionState::Unregistered { .. } => "unregistered",
            ScSessionState::Registering { .. } => "registering",
            ScSessionState::Registered { .. } => "registered",
            ScSessionState::HandingOff { .. } => "handing_off",
            ScSessionState::Disengaged => "disengaged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScEvent {
    EnterCell(MsspId),
    SaReceived(SaFrame),
    Timeout,
    HandoffNeeded(MsspId),
    /// A `RegisterAccept` arrived from `mssp`.
    Accepted {
        mssp: MsspId,
    },
    /// A `RegisterReject` arrived from `mssp`.
    Rejected {
        mssp: MsspId,
        reason: RejectReason,
    },
    ExitCorridor,
}

impl ScEvent {
    /// Converts an inbound control message into an event, if it is one the
    /// SC reacts to.
    pub fn from_control(msg: &ControlMessage) -> Option<Self> {
        match msg {
            ControlMessage::RegisterAccept { mssp_id, .. } => Some(ScEvent::Accepted { mssp: *mssp_id }),
            ControlMessage::RegisterReject { mssp_id, reason, .. } => {
                Some(ScEvent::Rejected { mssp: *mssp_id, reason: *reason })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScAction {
    Send {
        to: MsspId,
        msg: ControlMessage,
    },
    /// Hand the frame to decision making.
    DeliverSa(SaFrame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScStep {
    pub state: ScSessionState,
    pub actions: Vec<ScAction>,
}

impl ScStep {
    fn stay(state: &ScSessionState) -> Self {
        Self { state: state.clone(), actions: Vec::new() }
    }

    pub fn messages(&self) -> impl Iterator<Item = (MsspId, &ControlMessage)> {
        self.actions.iter().filter_map(|a| match a {
            ScAction::Send { to, msg } => Some((*to, msg)),
            ScAction::DeliverSa(_) => None,
        })
    }
}

fn register(sc: ScId, position: f64, to: MsspId) -> ScAction {
    ScAction::Send { to, msg: ControlMessage::RegisterRequest { sc_id: sc, position } }
}

fn start_registering(sc: ScId, position: f64, target: MsspId, attempts: u32, now: f64, cfg: &SessionConfig) -> ScStep {
    ScStep {
        state: ScSessionState::Registering { target, deadline: now + cfg.registration_timeout, attempts },
        actions: vec![register(sc, position, target)],
    }
}

fn back_off(target: MsspId, attempts: u32, now: f64, cfg: &SessionConfig) -> ScStep {
    let attempts = attempts + 1;
    ScStep {
        state: ScSessionState::Unregistered { pending: Some(target), attempts, retry_at: now + cfg.backoff(attempts) },
        actions: Vec::new(),
    }
}

/// One transition of the SC session machine. `position` is the SC's current
/// corridor position, echoed in register requests.
pub fn sc_step(
    sc: ScId,
    position: f64,
    state: &ScSessionState,
    event: &ScEvent,
    now: f64,
    cfg: &SessionConfig,
) -> ScStep {
    use ScEvent as E;
    use ScSessionState as S;
    let step = match (state, event) {
        (S::Disengaged, _) => None,
        (_, E::ExitCorridor) => {
            let actions = match state {
                S::Registering { target, .. } => vec![*target],
                S::Registered { mssp, .. } => vec![*mssp],
                S::HandingOff { old, new, .. } => vec![*old, *new],
                _ => vec![],
            }
            .into_iter()
            .map(|to| ScAction::Send { to, msg: ControlMessage::Deregister { sc_id: sc } })
            .collect();
            Some(ScStep { state: S::Disengaged, actions })
        }

        (S::Unregistered { attempts, retry_at, .. }, E::EnterCell(m)) => Some(if now >= *retry_at {
            start_registering(sc, position, *m, *attempts, now, cfg)
        } else {
            ScStep {
                state: S::Unregistered { pending: Some(*m), attempts: *attempts, retry_at: *retry_at },
                actions: Vec::new(),
            }
        }),
        (S::Unregistered { pending: Some(m), attempts, .. }, E::Timeout) => {
            Some(start_registering(sc, position, *m, *attempts, now, cfg))
        }

        (S::Registering { target, .. }, E::Accepted { mssp }) if mssp == target => {
            Some(ScStep { state: S::Registered { mssp: *mssp, last_sa_time: now }, actions: Vec::new() })
        }
        (S::Registering { target, attempts, .. }, E::Rejected { mssp, .. }) if mssp == target => {
            Some(back_off(*target, *attempts, now, cfg))
        }
        (S::Registering { target, attempts, .. }, E::Timeout) => Some(back_off(*target, *attempts, now, cfg)),

        (S::Registered { mssp, .. }, E::SaReceived(frame)) if frame.mssp_id == *mssp => Some(ScStep {
            state: S::Registered { mssp: *mssp, last_sa_time: now },
            actions: vec![ScAction::DeliverSa(frame.clone())],
        }),
        (S::Registered { mssp, .. }, E::HandoffNeeded(target)) if target != mssp => Some(ScStep {
            state: S::HandingOff { old: *mssp, new: *target, deadline: now + cfg.registration_timeout },
            actions: vec![
                register(sc, position, *target),
                ScAction::Send { to: *mssp, msg: ControlMessage::HandoffInitiate { sc_id: sc, target: *target } },
            ],
        }),
        // The MSSP no longer knows us (evicted); re-register immediately.
        (S::Registered { mssp, .. }, E::Rejected { mssp: from, reason: RejectReason::NotRegistered })
            if from == mssp =>
        {
            Some(start_registering(sc, position, *mssp, 0, now, cfg))
        }

        (S::HandingOff { old, .. }, E::SaReceived(frame)) if frame.mssp_id == *old => {
            Some(ScStep { state: state.clone(), actions: vec![ScAction::DeliverSa(frame.clone())] })
        }
        (S::HandingOff { old, new, .. }, E::Accepted { mssp }) if mssp == new => Some(ScStep {
            state: S::Registered { mssp: *new, last_sa_time: now },
            actions: vec![ScAction::Send { to: *old, msg: ControlMessage::HandoffComplete { sc_id: sc } }],
        }),
        (S::HandingOff { old, new, .. }, E::Rejected { mssp, .. }) if mssp == new => {
            Some(ScStep { state: S::Registered { mssp: *old, last_sa_time: now }, actions: Vec::new() })
        }
        (S::HandingOff { old, .. }, E::Timeout) => {
            Some(ScStep { state: S::Registered { mssp: *old, last_sa_time: now }, actions: Vec::new() })
        }

        _ => None,
    };
    step.unwrap_or_else(|| {
        trace!("{sc}: no transition for {} on {event:?}", state.name());
        ScStep::stay(state)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SC: ScId = ScId(1);
    const M1: MsspId = MsspId(1);
    const M2: MsspId = MsspId(2);

    fn cfg() -> SessionConfig {
        SessionConfig::default()
    }

    fn frame(m: MsspId) -> SaFrame {
        SaFrame { frame_seq: 1, mssp_id: m, timestamp: 0.0, tracks: vec![], incidents: vec![] }
    }

    #[test]
    fn entering_a_cell_starts_the_handshake() {
        let s = sc_step(SC, 10.0, &ScSessionState::default(), &ScEvent::EnterCell(M1), 0.0, &cfg());
        assert!(matches!(s.state, ScSessionState::Registering { target: M1, .. }));
        assert_eq!(
            s.actions,
            vec![ScAction::Send { to: M1, msg: ControlMessage::RegisterRequest { sc_id: SC, position: 10.0 } }]
        );
    }

    #[test]
    fn handoff_registers_with_the_new_cell_first() {
        let reg = ScSessionState::Registered { mssp: M1, last_sa_time: 0.0 };
        let s = sc_step(SC, 480.0, &reg, &ScEvent::HandoffNeeded(M2), 1.0, &cfg());
        assert!(matches!(s.state, ScSessionState::HandingOff { old: M1, new: M2, .. }));
        let msgs: Vec<_> = s.messages().collect();
        assert_eq!(msgs[0], (M2, &ControlMessage::RegisterRequest { sc_id: SC, position: 480.0 }));
        assert_eq!(msgs.len(), 2);

        let done = sc_step(SC, 490.0, &s.state, &ScEvent::Accepted { mssp: M2 }, 1.2, &cfg());
        assert_eq!(done.state, ScSessionState::Registered { mssp: M2, last_sa_time: 1.2 });
        assert_eq!(done.messages().next(), Some((M1, &ControlMessage::HandoffComplete { sc_id: SC })));
    }

    #[test]
    fn timeout_backs_off_exponentially() {
        let c = cfg();
        let mut state = sc_step(SC, 0.0, &ScSessionState::default(), &ScEvent::EnterCell(M1), 0.0, &c).state;
        let mut delays = Vec::new();
        for _ in 0..4 {
            let now = state.deadline().unwrap();
            let s = sc_step(SC, 0.0, &state, &ScEvent::Timeout, now, &c);
            assert!(s.actions.is_empty());
            let ScSessionState::Unregistered { retry_at, .. } = s.state else { panic!("{:?}", s.state) };
            delays.push(retry_at - now);
            state = sc_step(SC, 0.0, &s.state, &ScEvent::Timeout, retry_at, &c).state;
            assert!(matches!(state, ScSessionState::Registering { .. }));
        }
        for (got, want) in delays.iter().zip([0.1, 0.2, 0.4, 0.8]) {
            assert!((got - want).abs() < 1e-9, "{delays:?}");
        }
    }

    #[test]
    fn sa_is_gated_until_registered() {
        let c = cfg();
        let unreg = ScSessionState::default();
        assert!(sc_step(SC, 0.0, &unreg, &ScEvent::SaReceived(frame(M1)), 0.0, &c).actions.is_empty());
        let registering = ScSessionState::Registering { target: M1, deadline: 1.0, attempts: 0 };
        assert!(sc_step(SC, 0.0, &registering, &ScEvent::SaReceived(frame(M1)), 0.0, &c).actions.is_empty());
        let reg = ScSessionState::Registered { mssp: M1, last_sa_time: 0.0 };
        let s = sc_step(SC, 0.0, &reg, &ScEvent::SaReceived(frame(M1)), 0.5, &c);
        assert_eq!(s.actions, vec![ScAction::DeliverSa(frame(M1))]);
        assert!(sc_step(SC, 0.0, &reg, &ScEvent::SaReceived(frame(M2)), 0.5, &c).actions.is_empty());
    }

    #[test]
    fn accept_from_someone_else_is_ignored() {
        let registering = ScSessionState::Registering { target: M1, deadline: 1.0, attempts: 0 };
        let s = sc_step(SC, 0.0, &registering, &ScEvent::Accepted { mssp: M2 }, 0.1, &cfg());
        assert_eq!(s.state, registering);
    }

    #[test]
    fn exit_deregisters_and_disengages() {
        let reg = ScSessionState::Registered { mssp: M1, last_sa_time: 0.0 };
        let s = sc_step(SC, 0.0, &reg, &ScEvent::ExitCorridor, 3.0, &cfg());
        assert_eq!(s.state, ScSessionState::Disengaged);
        assert_eq!(s.messages().next(), Some((M1, &ControlMessage::Deregister { sc_id: SC })));
        let again = sc_step(SC, 0.0, &s.state, &ScEvent::EnterCell(M1), 4.0, &cfg());
        assert_eq!(again.state, ScSessionState::Disengaged);
        assert!(again.actions.is_empty());
    }
}
