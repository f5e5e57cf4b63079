//! Protocol conformance harness.
//!
//! Drives the SC session machine and MSSP registries through exhaustive
//! (state, event) walks and randomized lossy exchanges, checking the safety
//! rules after every step. Every message crosses the codec.

use super::{
    decode, encode, mssp_handle, plan_handoff, sc_step, ControlMessage, DbwStatus, Message, MsspRegistry,
    RegistryConfig, RegistryInput, RejectReason, SaFrame, ScAction, ScEvent, ScSessionState, SeaReport, SessionConfig,
    TrackReport,
};
use crate::ids::{MsspId, ScId, TrackId};
use crate::perception::{Cov2, Incident, IncidentKind, ObjectClass, Track};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckSummary {
    pub steps: u64,
    pub messages: u64,
    pub sa_delivered: u64,
    pub handoffs: u64,
    pub violations: Vec<String>,
}

impl CheckSummary {
    pub fn absorb(&mut self, other: CheckSummary) {
        self.steps += other.steps;
        self.messages += other.messages;
        self.sa_delivered += other.sa_delivered;
        self.handoffs += other.handoffs;
        self.violations.extend(other.violations);
    }
}

const SC: ScId = ScId(1);

fn frame_from(m: MsspId, seq: u32, t: f64) -> SaFrame {
    SaFrame { frame_seq: seq, mssp_id: m, timestamp: t, tracks: vec![], incidents: vec![] }
}

/// Rules that must hold for a single transition.
fn check_step(pre: &ScSessionState, event: &ScEvent, post: &ScSessionState, actions: &[ScAction]) -> Vec<String> {
    use ScSessionState as S;
    let mut v = Vec::new();
    let sends = actions.iter().filter(|a| matches!(a, ScAction::Send { .. })).count();
    if sends > 2 {
        v.push(format!("{} on {event:?} emitted {sends} messages", pre.name()));
    }
    if let S::HandingOff { old, new, .. } = post {
        if old == new {
            v.push(format!("handing off to the same MSSP {old}"));
        }
    }
    if let S::Registered { mssp, .. } = post {
        let kept = matches!(pre, S::Registered { mssp: m, .. } if m == mssp)
            || matches!(pre, S::HandingOff { old, .. } if old == mssp);
        let accepted = matches!(event, ScEvent::Accepted { mssp: m } if m == mssp);
        if !kept && !accepted {
            v.push(format!("registered with {mssp} from {} without an accept ({event:?})", pre.name()));
        }
    }
    for a in actions {
        if let ScAction::DeliverSa(f) = a {
            if pre.sa_source() != Some(f.mssp_id) {
                v.push(format!("SA from {} forwarded while {}", f.mssp_id, pre.name()));
            }
        }
    }
    v
}

fn sample_states(ids: &[MsspId]) -> Vec<ScSessionState> {
    use ScSessionState as S;
    let mut out = vec![S::Disengaged, S::Unregistered { pending: None, attempts: 0, retry_at: 0.0 }];
    for &m in ids {
        for (attempts, retry_at) in [(0, 0.0), (3, 0.0), (2, 100.0)] {
            out.push(S::Unregistered { pending: Some(m), attempts, retry_at });
        }
        out.push(S::Unregistered { pending: None, attempts: 1, retry_at: 100.0 });
        for (deadline, attempts) in [(0.5, 0), (100.0, 2)] {
            out.push(S::Registering { target: m, deadline, attempts });
        }
        out.push(S::Registered { mssp: m, last_sa_time: 0.0 });
        for &n in ids.iter().filter(|&&n| n != m) {
            out.push(S::HandingOff { old: m, new: n, deadline: 0.5 });
            out.push(S::HandingOff { old: m, new: n, deadline: 100.0 });
        }
    }
    out
}

fn sample_events(ids: &[MsspId]) -> Vec<ScEvent> {
    let mut out = vec![ScEvent::Timeout, ScEvent::ExitCorridor];
    for &m in ids {
        out.push(ScEvent::EnterCell(m));
        out.push(ScEvent::SaReceived(frame_from(m, 1, 1.0)));
        out.push(ScEvent::HandoffNeeded(m));
        out.push(ScEvent::Accepted { mssp: m });
        out.push(ScEvent::Rejected { mssp: m, reason: RejectReason::Capacity });
        out.push(ScEvent::Rejected { mssp: m, reason: RejectReason::NotRegistered });
    }
    out
}

/// Applies every event to every representative state and checks the
/// transition rules, determinism and the defined handshake transitions.
pub fn check_transition_table() -> CheckSummary {
    use ScSessionState as S;
    let ids = [MsspId(1), MsspId(2), MsspId(3)];
    let cfg = SessionConfig::default();
    let now = 1.0;
    let mut sum = CheckSummary::default();
    for pre in sample_states(&ids) {
        for ev in sample_events(&ids) {
            let a = sc_step(SC, 10.0, &pre, &ev, now, &cfg);
            let b = sc_step(SC, 10.0, &pre, &ev, now, &cfg);
            sum.steps += 1;
            sum.messages += a.messages().count() as u64;
            if a != b {
                sum.violations.push(format!("nondeterministic on {} / {ev:?}", pre.name()));
            }
            sum.violations.extend(check_step(&pre, &ev, &a.state, &a.actions));
            match (&pre, &ev) {
                (S::Registered { mssp, .. }, ScEvent::HandoffNeeded(t)) if t != mssp => {
                    let ok = a.state == S::HandingOff { old: *mssp, new: *t, deadline: now + cfg.registration_timeout }
                        && matches!(a.messages().next(), Some((to, ControlMessage::RegisterRequest { .. })) if to == *t);
                    if !ok {
                        sum.violations.push(format!("handoff from {mssp} to {t} produced {:?}", a));
                    }
                }
                (S::Unregistered { retry_at, .. }, ScEvent::EnterCell(m)) if *retry_at <= now => {
                    let ok = matches!(a.state, S::Registering { target, .. } if target == *m)
                        && matches!(a.messages().next(), Some((to, ControlMessage::RegisterRequest { .. })) if to == *m);
                    if !ok {
                        sum.violations.push(format!("enter cell {m} produced {a:?}"));
                    }
                }
                (S::Registering { target, attempts, .. }, ScEvent::Timeout) => {
                    let want = S::Unregistered {
                        pending: Some(*target),
                        attempts: attempts + 1,
                        retry_at: now + cfg.backoff(attempts + 1),
                    };
                    if a.state != want || a.messages().next().is_some() {
                        sum.violations.push(format!("registering timeout produced {a:?}"));
                    }
                }
                _ => {}
            }
        }
    }
    sum
}

struct InFlight {
    at: f64,
    to_mssp: Option<usize>,
    bytes: Vec<u8>,
    original: Message,
}

struct Link {
    latency: f64,
    loss: f64,
    queue: Vec<InFlight>,
}

impl Link {
    fn send(&mut self, rng: &mut ChaCha8Rng, to_mssp: Option<usize>, msg: Message, now: f64, sum: &mut CheckSummary) {
        sum.messages += 1;
        let bytes = encode(&msg);
        if rng.random::<f64>() < self.loss {
            return;
        }
        self.queue.push(InFlight { at: now + self.latency, to_mssp, bytes, original: msg });
    }

    fn due(&mut self, now: f64) -> Vec<InFlight> {
        let (due, rest) = std::mem::take(&mut self.queue).into_iter().partition(|m| m.at <= now + 1e-9);
        self.queue = rest;
        due
    }
}

fn check_registry(reg: &MsspRegistry, sum: &mut CheckSummary) {
    if reg.len() > reg.config.capacity {
        sum.violations.push(format!(
            "{} holds {} sessions, capacity {}",
            reg.config.mssp_id,
            reg.len(),
            reg.config.capacity
        ));
    }
    let mut seen = BTreeSet::new();
    for sc in reg.registered() {
        for &s in &reg.session(sc).expect("listed").slots {
            if !seen.insert(s) {
                sum.violations.push(format!("{} assigned slot {s} twice", reg.config.mssp_id));
            }
        }
    }
}

/// One randomized SC journey across three overlapping cells with lossy
/// links, preloaded registries, spurious events and overheard SA frames.
pub fn session_trial(seed: u64, loss: f64, steps: usize) -> CheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SessionConfig::default();
    let cells = [(MsspId(1), (0.0, 500.0)), (MsspId(2), (450.0, 950.0)), (MsspId(3), (900.0, 1400.0))];
    let mut sum = CheckSummary::default();
    let mut regs: Vec<MsspRegistry> = cells
        .iter()
        .map(|&(id, cell)| {
            let cap = rng.random_range(1..=3);
            let mut reg = MsspRegistry::new(RegistryConfig::new(id, cell, cap));
            // Foreign sessions occupy capacity until they are evicted.
            for k in 0..rng.random_range(0..=cap) {
                let req = RegistryInput::Control(ControlMessage::RegisterRequest {
                    sc_id: ScId(100 + k as u32),
                    position: cell.0,
                });
                reg = mssp_handle(reg, &req, 0.0).0;
            }
            reg
        })
        .collect();
    let dt = 0.1;
    let mut position = rng.random_range(0.0..400.0);
    let speed = rng.random_range(5.0..40.0);
    let mut state = ScSessionState::default();
    let mut link = Link { latency: 0.02, loss, queue: Vec::new() };
    let mut seq = 0u32;
    let mut exited = false;

    let apply = |state: &mut ScSessionState,
                 ev: ScEvent,
                 now: f64,
                 position: f64,
                 link: &mut Link,
                 rng: &mut ChaCha8Rng,
                 sum: &mut CheckSummary| {
        let step = sc_step(SC, position, state, &ev, now, &cfg);
        sum.steps += 1;
        sum.violations.extend(check_step(state, &ev, &step.state, &step.actions));
        for a in &step.actions {
            match a {
                ScAction::DeliverSa(_) => sum.sa_delivered += 1,
                ScAction::Send { to, msg } => {
                    if matches!(msg, ControlMessage::HandoffComplete { .. }) {
                        sum.handoffs += 1;
                    }
                    let idx = cells.iter().position(|c| c.0 == *to).expect("known MSSP");
                    link.send(rng, Some(idx), Message::Control(msg.clone()), now, sum);
                }
            }
        }
        *state = step.state;
    };

    for k in 0..steps {
        let now = k as f64 * dt;
        for m in link.due(now) {
            match decode(&m.bytes) {
                Ok(d) if d == m.original => {}
                other => sum.violations.push(format!("codec changed {:?} into {other:?}", m.original)),
            }
            match m.to_mssp {
                Some(i) => {
                    let input = match &m.original {
                        Message::Control(c) => RegistryInput::Control(c.clone()),
                        Message::Sea(s) => RegistryInput::Sea(s.clone()),
                        Message::Sa(_) => continue,
                    };
                    let (reg, replies) = mssp_handle(regs[i].clone(), &input, now);
                    regs[i] = reg;
                    check_registry(&regs[i], &mut sum);
                    for (sc, reply) in replies {
                        if sc == SC {
                            link.send(&mut rng, None, Message::Control(reply), now, &mut sum);
                        }
                    }
                }
                None => {
                    let ev = match m.original {
                        Message::Control(c) => ScEvent::from_control(&c),
                        Message::Sa(f) => Some(ScEvent::SaReceived(f)),
                        Message::Sea(_) => None,
                    };
                    if let Some(ev) = ev {
                        apply(&mut state, ev, now, position, &mut link, &mut rng, &mut sum);
                    }
                }
            }
        }
        if exited {
            continue;
        }
        if state.deadline().is_some_and(|d| d <= now) {
            apply(&mut state, ScEvent::Timeout, now, position, &mut link, &mut rng, &mut sum);
        }
        if matches!(state, ScSessionState::Unregistered { pending: None, .. }) {
            if let Some(&(m, _)) = cells.iter().find(|(_, (a, b))| *a <= position && position <= *b) {
                apply(&mut state, ScEvent::EnterCell(m), now, position, &mut link, &mut rng, &mut sum);
            }
        }
        if let ScSessionState::Registered { mssp, .. } = state {
            if let Ok(Some(t)) = plan_handoff(&cells, position, speed, 2.0) {
                if t != mssp {
                    apply(&mut state, ScEvent::HandoffNeeded(t), now, position, &mut link, &mut rng, &mut sum);
                }
            }
        }
        if rng.random::<f64>() < 0.05 {
            let m = cells.choose(&mut rng).expect("cells").0;
            let ev = match rng.random_range(0..4) {
                0 => ScEvent::HandoffNeeded(m),
                1 => ScEvent::Timeout,
                2 => ScEvent::EnterCell(m),
                _ => {
                    seq += 1;
                    ScEvent::SaReceived(frame_from(m, seq, now))
                }
            };
            apply(&mut state, ev, now, position, &mut link, &mut rng, &mut sum);
        }
        for (i, reg) in regs.iter_mut().enumerate() {
            *reg = mssp_handle(reg.clone(), &RegistryInput::Tick, now).0;
            if reg.is_registered(SC) {
                seq += 1;
                link.send(&mut rng, None, Message::Sa(frame_from(cells[i].0, seq, now)), now, &mut sum);
            }
        }
        if let Some(m) = state.serving() {
            let idx = cells.iter().position(|c| c.0 == m).expect("known MSSP");
            let sea = SeaReport { sc_id: SC, timestamp: now, position, lane: 0, speed, dbw_status: DbwStatus::Ok };
            link.send(&mut rng, Some(idx), Message::Sea(sea), now, &mut sum);
        }
        position += speed * dt;
        if position > 1400.0 {
            apply(&mut state, ScEvent::ExitCorridor, now, position, &mut link, &mut rng, &mut sum);
            exited = true;
        }
    }
    sum
}

/// Time for a fresh SC inside a cell to reach a registered session over a
/// link losing each message with probability `loss`, or `None` if it does
/// not register within `horizon` seconds.
pub fn registration_time(seed: u64, loss: f64, horizon: f64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SessionConfig::default();
    let m = MsspId(1);
    let mut reg = MsspRegistry::new(RegistryConfig::new(m, (0.0, 500.0), 16));
    let mut link = Link { latency: 0.02, loss, queue: Vec::new() };
    let mut sum = CheckSummary::default();
    let mut state = ScSessionState::default();
    let dt = 0.01;
    let mut k = 0u64;
    loop {
        let now = k as f64 * dt;
        if now > horizon {
            return None;
        }
        for msg in link.due(now) {
            match (msg.to_mssp, msg.original) {
                (Some(_), Message::Control(c)) => {
                    let (r, replies) = mssp_handle(reg, &RegistryInput::Control(c), now);
                    reg = r;
                    for (_, reply) in replies {
                        link.send(&mut rng, None, Message::Control(reply), now, &mut sum);
                    }
                }
                (None, Message::Control(c)) => {
                    if let Some(ev) = ScEvent::from_control(&c) {
                        state = step_and_send(&state, &ev, now, &cfg, &mut link, &mut rng, &mut sum);
                    }
                }
                _ => {}
            }
        }
        if state.is_registered() {
            return Some(now);
        }
        if state.deadline().is_some_and(|d| d <= now) {
            state = step_and_send(&state, &ScEvent::Timeout, now, &cfg, &mut link, &mut rng, &mut sum);
        }
        if matches!(state, ScSessionState::Unregistered { pending: None, .. }) {
            state = step_and_send(&state, &ScEvent::EnterCell(m), now, &cfg, &mut link, &mut rng, &mut sum);
        }
        k += 1;
    }
}

fn step_and_send(
    state: &ScSessionState,
    ev: &ScEvent,
    now: f64,
    cfg: &SessionConfig,
    link: &mut Link,
    rng: &mut ChaCha8Rng,
    sum: &mut CheckSummary,
) -> ScSessionState {
    let step = sc_step(SC, 100.0, state, ev, now, cfg);
    for (_, msg) in step.messages() {
        link.send(rng, Some(0), Message::Control(msg.clone()), now, sum);
    }
    step.state
}

fn finite<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-1.0e4..1.0e4)
}

fn class<R: Rng + ?Sized>(rng: &mut R) -> ObjectClass {
    *[ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Bicycle, ObjectClass::Unknown]
        .choose(rng)
        .expect("classes")
}

fn random_incident<R: Rng + ?Sized>(rng: &mut R) -> Incident {
    Incident {
        kind: if rng.random() { IncidentKind::StalledVehicle } else { IncidentKind::Obstruction },
        position: finite(rng),
        lane: rng.random(),
        onset: finite(rng),
        confidence: rng.random_range(0.0..=1.0),
        track_id: rng.random::<bool>().then(|| TrackId(rng.random())),
    }
}

fn random_track<R: Rng + ?Sized>(rng: &mut R) -> Track {
    Track {
        id: TrackId(rng.random()),
        class: class(rng),
        position: finite(rng),
        velocity: finite(rng),
        covariance: Cov2 { pp: rng.random_range(0.0..100.0), pv: finite(rng), vv: rng.random_range(0.0..100.0) },
        lane: rng.random(),
        last_update: finite(rng),
        miss_count: rng.random(),
        hits: rng.random(),
    }
}

/// A valid message of a uniformly chosen variant with random contents.
pub fn random_message<R: Rng + ?Sized>(rng: &mut R) -> Message {
    let sc = ScId(rng.random());
    let mssp = MsspId(rng.random());
    let list = |rng: &mut R| rng.random_range(0..6usize);
    match rng.random_range(0..10) {
        0 => Message::Control(ControlMessage::RegisterRequest { sc_id: sc, position: finite(rng) }),
        1 => {
            let n = list(rng);
            Message::Control(ControlMessage::RegisterAccept {
                mssp_id: mssp,
                sc_id: sc,
                slots: (0..n).map(|_| rng.random()).collect(),
                cell: (finite(rng), finite(rng)),
            })
        }
        2 => Message::Control(ControlMessage::RegisterReject {
            mssp_id: mssp,
            sc_id: sc,
            reason: if rng.random() { RejectReason::Capacity } else { RejectReason::NotRegistered },
        }),
        3 => Message::Control(ControlMessage::HandoffInitiate { sc_id: sc, target: mssp }),
        4 => Message::Control(ControlMessage::HandoffComplete { sc_id: sc }),
        5 => Message::Control(ControlMessage::Deregister { sc_id: sc }),
        6 => {
            let n = list(rng);
            Message::Control(ControlMessage::NeighborTrackShare {
                from: mssp,
                tracks: (0..n).map(|_| random_track(rng)).collect(),
            })
        }
        7 => Message::Control(ControlMessage::IncidentUpload { mssp_id: mssp, incident: random_incident(rng) }),
        8 => {
            let (n, k) = (list(rng), list(rng));
            Message::Sa(SaFrame {
                frame_seq: rng.random(),
                mssp_id: mssp,
                timestamp: finite(rng),
                tracks: (0..n)
                    .map(|_| TrackReport {
                        track_id: TrackId(rng.random()),
                        class: class(rng),
                        position: finite(rng),
                        lane: rng.random(),
                        velocity: finite(rng),
                        position_variance: rng.random_range(0.0..100.0),
                    })
                    .collect(),
                incidents: (0..k).map(|_| random_incident(rng)).collect(),
            })
        }
        _ => Message::Sea(SeaReport {
            sc_id: sc,
            timestamp: finite(rng),
            position: finite(rng),
            lane: rng.random(),
            speed: rng.random_range(0.0..60.0),
            dbw_status: *[DbwStatus::Ok, DbwStatus::Degraded, DbwStatus::Failed].choose(rng).expect("statuses"),
        }),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuzzSummary {
    pub inputs: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub violations: Vec<String>,
}

/// Feeds `inputs` byte strings to `decode`: raw noise, noise behind a valid
/// header, and valid encodings with flipped, dropped or appended bytes.
/// Anything accepted must re-encode to exactly the input.
pub fn fuzz_decode(seed: u64, inputs: u64) -> FuzzSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = FuzzSummary { inputs, ..Default::default() };
    for _ in 0..inputs {
        let bytes = match rng.random_range(0..5) {
            0 => {
                let n = rng.random_range(0..80);
                (0..n).map(|_| rng.random()).collect()
            }
            1 => {
                let mut b = encode(&random_message(&mut rng));
                b.truncate(8);
                let n = rng.random_range(0..80);
                b.extend((0..n).map(|_| rng.random::<u8>()));
                let len = (b.len() - 8) as u32;
                if rng.random() {
                    b[4..8].copy_from_slice(&len.to_le_bytes());
                }
                b
            }
            2 => {
                let mut b = encode(&random_message(&mut rng));
                for _ in 0..rng.random_range(1..4) {
                    let i = rng.random_range(0..b.len());
                    b[i] ^= 1 << rng.random_range(0..8);
                }
                b
            }
            3 => {
                let mut b = encode(&random_message(&mut rng));
                b.truncate(rng.random_range(0..b.len()));
                b
            }
            _ => {
                let mut b = encode(&random_message(&mut rng));
                b.push(rng.random());
                b
            }
        };
        match decode(&bytes) {
            Ok(m) => {
                sum.accepted += 1;
                if encode(&m) != bytes {
                    sum.violations.push(format!("accepted a non-canonical encoding of {}", m.kind()));
                }
            }
            Err(_) => sum.rejected += 1,
        }
    }
    sum
}
