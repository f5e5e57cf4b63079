//! MSSP-side registration bookkeeping.

use super::{ControlMessage, RejectReason, SeaReport};
use crate::ids::{MsspId, ScId};
use log::debug;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub mssp_id: MsspId,
    pub cell: (f64, f64),
    /// Maximum concurrent sessions.
    pub capacity: usize,
    pub slots_per_session: u16,
    /// SeA silence after which a session is evicted, s.
    pub t_evict: f64,
}

impl RegistryConfig {
    pub fn new(mssp_id: MsspId, cell: (f64, f64), capacity: usize) -> Self {
        Self { mssp_id, cell, capacity, slots_per_session: 1, t_evict: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub slots: Vec<u16>,
    /// Time of the last SeA, or of registration.
    pub last_sea: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsspRegistry {
    pub config: RegistryConfig,
    sessions: BTreeMap<ScId, Session>,
}

impl MsspRegistry {
    pub fn new(config: RegistryConfig) -> Self {
        Self { config, sessions: BTreeMap::new() }
    }

    pub fn is_registered(&self, sc: ScId) -> bool {
        self.sessions.contains_key(&sc)
    }

    pub fn session(&self, sc: ScId) -> Option<&Session> {
        self.sessions.get(&sc)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn registered(&self) -> impl Iterator<Item = ScId> + '_ {
        self.sessions.keys().copied()
    }

    fn free_slots(&self, count: u16) -> Option<Vec<u16>> {
        let total = self.config.capacity * usize::from(self.config.slots_per_session);
        let mut used = vec![false; total];
        for s in self.sessions.values() {
            for &slot in &s.slots {
                used[usize::from(slot)] = true;
            }
        }
        let free: Vec<u16> = (0..total).filter(|&k| !used[k]).take(usize::from(count)).map(|k| k as u16).collect();
        (free.len() == usize::from(count)).then_some(free)
    }

    fn evict_silent(&mut self, now: f64) {
        let limit = self.config.t_evict;
        self.sessions.retain(|sc, s| {
            let keep = now - s.last_sea <= limit + EPS;
            if !keep {
                debug!("{}: evicting {sc} after {:.3} s of silence", self.config.mssp_id, now - s.last_sea);
            }
            keep
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegistryInput {
    Control(ControlMessage),
    Sea(SeaReport),
    /// Periodic housekeeping with no message.
    Tick,
}

/// Processes one input and returns the updated registry and the replies
/// addressed to individual SCs. Silent sessions are evicted before the input
/// is considered.
pub fn mssp_handle(
    registry: MsspRegistry,
    input: &RegistryInput,
    now: f64,
) -> (MsspRegistry, Vec<(ScId, ControlMessage)>) {
    let mut reg = registry;
    reg.evict_silent(now);
    let me = reg.config.mssp_id;
    let mut out = Vec::new();
    match input {
        RegistryInput::Control(ControlMessage::RegisterRequest { sc_id, .. }) => {
            let slots = if let Some(s) = reg.sessions.get_mut(sc_id) {
                s.last_sea = now;
                Some(s.slots.clone())
            } else if reg.sessions.len() < reg.config.capacity {
                reg.free_slots(reg.config.slots_per_session)
            } else {
                None
            };
            match slots {
                Some(slots) => {
                    reg.sessions.entry(*sc_id).or_insert_with(|| Session { slots: slots.clone(), last_sea: now });
                    out.push((
                        *sc_id,
                        ControlMessage::RegisterAccept { mssp_id: me, sc_id: *sc_id, slots, cell: reg.config.cell },
                    ));
                }
                None => out.push((
                    *sc_id,
                    ControlMessage::RegisterReject { mssp_id: me, sc_id: *sc_id, reason: RejectReason::Capacity },
                )),
            }
        }
        RegistryInput::Control(ControlMessage::Deregister { sc_id } | ControlMessage::HandoffComplete { sc_id }) => {
            reg.sessions.remove(sc_id);
        }
        RegistryInput::Control(other) => debug!("{me}: ignoring {}", other.kind()),
        RegistryInput::Sea(sea) => match reg.sessions.get_mut(&sea.sc_id) {
            Some(s) => s.last_sea = sea.timestamp.max(s.last_sea),
            None => out.push((
                sea.sc_id,
                ControlMessage::RegisterReject { mssp_id: me, sc_id: sea.sc_id, reason: RejectReason::NotRegistered },
            )),
        },
        RegistryInput::Tick => {}
    }
    (reg, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::DbwStatus;

    fn reg(capacity: usize) -> MsspRegistry {
        MsspRegistry::new(RegistryConfig::new(MsspId(1), (0.0, 500.0), capacity))
    }

    fn request(sc: u32) -> RegistryInput {
        RegistryInput::Control(ControlMessage::RegisterRequest { sc_id: ScId(sc), position: 10.0 })
    }

    fn sea(sc: u32, t: f64) -> RegistryInput {
        RegistryInput::Sea(SeaReport {
            sc_id: ScId(sc),
            timestamp: t,
            position: 10.0,
            lane: 0,
            speed: 10.0,
            dbw_status: DbwStatus::Ok,
        })
    }

    #[test]
    fn first_registrant_gets_slot_zero() {
        let (r, out) = mssp_handle(reg(4), &request(7), 0.0);
        assert!(r.is_registered(ScId(7)));
        assert_eq!(
            out,
            vec![(
                ScId(7),
                ControlMessage::RegisterAccept {
                    mssp_id: MsspId(1),
                    sc_id: ScId(7),
                    slots: vec![0],
                    cell: (0.0, 500.0)
                }
            )]
        );
    }

    #[test]
    fn full_registry_rejects_for_capacity() {
        let mut r = reg(2);
        for sc in 0..2 {
            r = mssp_handle(r, &request(sc), 0.0).0;
        }
        let (r, out) = mssp_handle(r, &request(9), 0.0);
        assert_eq!(r.len(), 2);
        assert!(matches!(out[0].1, ControlMessage::RegisterReject { reason: RejectReason::Capacity, .. }));
    }

    #[test]
    fn released_slots_are_reused() {
        let mut r = reg(2);
        r = mssp_handle(r, &request(1), 0.0).0;
        r = mssp_handle(r, &request(2), 0.0).0;
        r = mssp_handle(r, &RegistryInput::Control(ControlMessage::Deregister { sc_id: ScId(1) }), 0.0).0;
        let (r, _) = mssp_handle(r, &request(3), 0.0);
        assert_eq!(r.session(ScId(3)).unwrap().slots, vec![0]);
    }

    #[test]
    fn repeated_request_is_idempotent() {
        let (r, a) = mssp_handle(reg(1), &request(1), 0.0);
        let (r, b) = mssp_handle(r, &request(1), 0.1);
        assert_eq!(r.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn silence_beyond_t_evict_evicts() {
        // SeA every 0.1 s keeps the session; then it goes quiet.
        let mut r = mssp_handle(reg(1), &request(5), 0.0).0;
        for k in 1..=10 {
            let t = k as f64 * 0.1;
            let (next, out) = mssp_handle(r, &sea(5, t), t);
            assert!(out.is_empty());
            r = next;
        }
        let last = 1.0;
        for k in 1..=3 {
            let t = last + k as f64 * 0.1;
            r = mssp_handle(r, &RegistryInput::Tick, t).0;
            assert!(r.is_registered(ScId(5)), "evicted early at {t}");
        }
        r = mssp_handle(r, &RegistryInput::Tick, last + 0.4).0;
        assert!(!r.is_registered(ScId(5)));
        let (_, out) = mssp_handle(r, &sea(5, 1.5), 1.5);
        assert!(matches!(out[0].1, ControlMessage::RegisterReject { reason: RejectReason::NotRegistered, .. }));
    }
}
