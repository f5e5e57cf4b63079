//! The fixed-step episode loop.

use super::decision::{invert_command, sc_decide, Decision, DecisionReason};
use super::network::{Delivery, Endpoint, Network};
use super::outcome::{classify, impact_class, in_contact, time_to_collision, CollisionEvent, OutcomeLabel};
use super::scenario::{MsspPlacement, ScenarioConfig, VehicleSpec, ARRIVAL_ID_BASE};
use super::trace::{hash_records, KindLimits, TraceDetail, TraceEvent, TraceRecord, TrackRecord, VehicleRecord};
use super::vehicle::{
    execute_dbw, manual_driver, step_vehicle, Actuation, DbwCommand, DriveMode, LaneDir, VehicleKind, VehicleState,
};
use super::SimError;
use crate::ids::{MsspId, ScId, TrackId};
use crate::perception::{
    associate, compose_sa, detect_incidents, merge_detections, observer_update, predict, reconcile, sense, spawn_track,
    IncidentThresholds, StallMonitor, Track, TruthObject,
};
use crate::protocol::{
    mssp_handle, plan_handoff, sc_step, ControlMessage, DbwStatus, Message, MsspRegistry, RegistryConfig,
    RegistryInput, SaFrame, ScAction, ScEvent, ScSessionState, SeaReport, SessionConfig,
};
use crate::risk::FaultConfig;
use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Which responsibility components misbehave in an episode. Bit order is
/// (DBW, situational awareness, decision making).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FaultAssignment {
    pub dbw: bool,
    pub sa: bool,
    pub decision: bool,
}

impl FaultAssignment {
    pub const COMPONENTS: [&'static str; 3] = ["dbw", "sa", "decision"];

    pub fn all() -> [FaultAssignment; 8] {
        std::array::from_fn(Self::from_index)
    }

    pub fn from_index(index: usize) -> Self {
        Self { dbw: index & 4 != 0, sa: index & 2 != 0, decision: index & 1 != 0 }
    }

    pub fn index(&self) -> usize {
        usize::from(self.dbw) << 2 | usize::from(self.sa) << 1 | usize::from(self.decision)
    }

    pub fn parse(bits: &str) -> Option<Self> {
        let f = FaultConfig::parse_bits(bits)?;
        Self::try_from(&f).ok()
    }

    pub fn to_config(&self) -> FaultConfig {
        FaultConfig::new(vec![self.dbw, self.sa, self.decision])
    }
}

impl TryFrom<&FaultConfig> for FaultAssignment {
    type Error = SimError;

    fn try_from(f: &FaultConfig) -> Result<Self, SimError> {
        match f.bits() {
            &[dbw, sa, decision] => Ok(Self { dbw, sa, decision }),
            b => Err(SimError::Config(format!("fault assignment needs 3 bits, got {}", b.len()))),
        }
    }
}

impl fmt::Display for FaultAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |x: bool| if x { '1' } else { '0' };
        write!(f, "{}{}{}", b(self.dbw), b(self.sa), b(self.decision))
    }
}

/// Named random streams, each derived from the episode seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Sensing = 1,
    Loss = 2,
    FaultDbw = 3,
    FaultSa = 4,
    FaultDecision = 5,
    Arrivals = 6,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub ticks: u64,
    pub handoffs: u64,
    /// Ticks an engaged SC spent without a live session after first
    /// registering.
    pub session_gap_ticks: u64,
    pub commands: u64,
    pub stale_decisions: u64,
    pub inverted_commands: u64,
    pub ignored_commands: u64,
    pub messages_sent: u64,
    pub messages_lost: u64,
    pub exited: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub scenario: String,
    pub seed: u64,
    pub faults: FaultAssignment,
    pub detail: TraceDetail,
    pub records: Vec<TraceRecord>,
    pub hash: u64,
    pub collisions: Vec<CollisionEvent>,
    pub min_ttc: Option<f64>,
    pub outcome: OutcomeLabel,
    pub terminated_early: bool,
    pub stats: EpisodeStats,
}

struct Recorder {
    detail: TraceDetail,
    records: Vec<TraceRecord>,
    seq: u64,
}

impl Recorder {
    fn always(&mut self, t: f64, event: TraceEvent) {
        self.records.push(TraceRecord { t, seq: self.seq, event });
        self.seq += 1;
    }

    fn full(&mut self, t: f64, event: impl FnOnce() -> TraceEvent) {
        if self.detail == TraceDetail::Full {
            self.always(t, event());
        }
    }
}

struct MsspActor {
    id: MsspId,
    coverage: (f64, f64),
    placement: MsspPlacement,
    registry: MsspRegistry,
    tracks: Vec<Track>,
    next_track: u32,
    monitor: StallMonitor,
    seq: u32,
    next_sa_at: f64,
    sea_inbox: Vec<SeaReport>,
    neighbor_inbox: Vec<Track>,
    uploaded: BTreeSet<TrackId>,
    neighbors: Vec<MsspId>,
}

struct ScActor {
    id: ScId,
    state: ScSessionState,
    /// Latest SA delivered by the current session; cleared whenever the
    /// SA source changes.
    sa: Option<SaFrame>,
    last_sa_time: Option<f64>,
    next_sea_at: f64,
    prev: Actuation,
    ever_registered: bool,
    target_speed: f64,
    disengage_at: Option<f64>,
    take_over_spot: Option<f64>,
}

struct Agent {
    state: VehicleState,
    sc: Option<ScActor>,
    desired_speed: f64,
    stall_at: Option<f64>,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    faults: FaultAssignment,
    cells: Vec<(MsspId, (f64, f64))>,
    session: SessionConfig,
    mssps: Vec<MsspActor>,
    agents: Vec<Agent>,
    pending: Vec<VehicleSpec>,
    net: Network,
    rec: Recorder,
    stats: EpisodeStats,
    sensing: ChaCha8Rng,
    loss: ChaCha8Rng,
    f_dbw: ChaCha8Rng,
    f_sa: ChaCha8Rng,
    f_dec: ChaCha8Rng,
    collisions: Vec<CollisionEvent>,
    contacts: BTreeSet<(u32, u32)>,
    min_ttc: Option<f64>,
}

/// Runs one episode at full trace detail.
pub fn run_episode(cfg: &ScenarioConfig, faults: FaultAssignment, seed: u64) -> Result<EpisodeTrace, SimError> {
    run_episode_with(cfg, faults, seed, TraceDetail::Full)
}

/// Runs one episode: sense, perceive, publish SA, deliver messages, decide,
/// actuate, step and classify, every `dt` until the horizon, a severe
/// collision, or an empty corridor.
pub fn run_episode_with(
    cfg: &ScenarioConfig,
    faults: FaultAssignment,
    seed: u64,
    detail: TraceDetail,
) -> Result<EpisodeTrace, SimError> {
    cfg.validate()?;
    let mut world = World::new(cfg, faults, seed, detail);
    let dt = cfg.dt;
    let steps = (cfg.horizon / dt).round() as u64;
    let mut terminated_early = false;
    world.spawn_due(0.0);
    world.record_tick(0.0);
    for k in 0..steps {
        let now = k as f64 * dt;
        let next = (k + 1) as f64 * dt;
        world.deliver(now);
        world.perceive(now)?;
        world.drive(now);
        world.advance(next);
        world.stats.ticks += 1;
        if world.collisions.iter().any(|c| c.dv >= cfg.classifier.severe_dv) {
            terminated_early = true;
            break;
        }
        world.spawn_due(next);
        if world.agents.is_empty() && world.pending.is_empty() {
            break;
        }
    }
    let end_t = world.rec.records.last().map_or(0.0, |r| r.t);
    let outcome = classify(&world.collisions, world.min_ttc, &cfg.classifier);
    world.rec.always(
        end_t,
        TraceEvent::Outcome {
            label: outcome.as_str().into(),
            min_ttc: world.min_ttc,
            collisions: world.collisions.len(),
            terminated_early,
        },
    );
    let hash = hash_records(&world.rec.records);
    Ok(EpisodeTrace {
        scenario: cfg.name.clone(),
        seed,
        faults,
        detail,
        records: world.rec.records,
        hash,
        collisions: world.collisions,
        min_ttc: world.min_ttc,
        outcome,
        terminated_early,
        stats: world.stats,
    })
}

fn kind_limits(cfg: &ScenarioConfig) -> Vec<KindLimits> {
    let d = &cfg.driver;
    let e = &cfg.envelope;
    vec![
        KindLimits {
            kind: VehicleKind::Iea,
            max_accel: e.max_accel,
            max_decel: e.max_decel,
            v_max: VehicleKind::Iea.v_max(),
        },
        KindLimits {
            kind: VehicleKind::Manual,
            max_accel: d.max_accel,
            max_decel: d.max_brake,
            v_max: VehicleKind::Manual.v_max(),
        },
        KindLimits {
            kind: VehicleKind::Bicycle,
            max_accel: d.max_accel,
            max_decel: d.max_brake,
            v_max: VehicleKind::Bicycle.v_max(),
        },
        KindLimits {
            kind: VehicleKind::Pedestrian,
            max_accel: d.max_accel,
            max_decel: d.max_brake,
            v_max: VehicleKind::Pedestrian.v_max(),
        },
    ]
}

impl<'a> World<'a> {
    fn new(cfg: &'a ScenarioConfig, faults: FaultAssignment, seed: u64, detail: TraceDetail) -> Self {
        let cells = cfg.cells();
        let n = &cfg.network;
        let session = SessionConfig {
            registration_timeout: n.registration_timeout,
            backoff_base: n.backoff_base,
            backoff_max: n.backoff_max,
        };
        let mssps = cells
            .iter()
            .enumerate()
            .map(|(k, &(id, coverage))| {
                let placement = cfg.mssp.iter().find(|m| m.id == id).expect("cell from placement").clone();
                let mut rc = RegistryConfig::new(id, coverage, placement.capacity);
                rc.t_evict = n.t_evict();
                let neighbors = [k.checked_sub(1), Some(k + 1)]
                    .into_iter()
                    .flatten()
                    .filter_map(|j| cells.get(j).map(|c| c.0))
                    .collect();
                MsspActor {
                    id,
                    coverage,
                    placement,
                    registry: MsspRegistry::new(rc),
                    tracks: Vec::new(),
                    next_track: 0,
                    monitor: StallMonitor::new(),
                    seq: 0,
                    next_sa_at: 0.0,
                    sea_inbox: Vec::new(),
                    neighbor_inbox: Vec::new(),
                    uploaded: BTreeSet::new(),
                    neighbors,
                }
            })
            .collect();

        let mut pending = cfg.vehicles.clone();
        if let Some(a) = &cfg.arrivals {
            let mut rng = stream(seed, Stream::Arrivals);
            if a.rate > 0.0 {
                let gap = Exp::new(a.rate).expect("positive rate");
                let mut t = 0.0;
                let mut k = 0;
                loop {
                    t += gap.sample(&mut rng);
                    let iea = rng.random::<f64>() < a.iea_fraction;
                    if t > a.until {
                        break;
                    }
                    pending.push(VehicleSpec {
                        id: ARRIVAL_ID_BASE + k,
                        kind: if iea { VehicleKind::Iea } else { VehicleKind::Manual },
                        lane: a.lane,
                        position: cfg.corridor.entry,
                        speed: a.speed,
                        entry_time: t,
                        desired_speed: None,
                        stall_at: None,
                        disengage_at: None,
                    });
                    k += 1;
                }
            }
        }
        pending.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.id.cmp(&b.id)));

        let mut rec = Recorder { detail, records: Vec::new(), seq: 0 };
        rec.always(
            0.0,
            TraceEvent::Header {
                scenario: cfg.name.clone(),
                seed,
                faults: faults.to_string(),
                dt: cfg.dt,
                lanes: cfg.corridor.lanes,
                limits: kind_limits(cfg),
            },
        );
        Self {
            cfg,
            faults,
            cells,
            session,
            mssps,
            agents: Vec::new(),
            pending,
            net: Network::new(n.latency, n.loss),
            rec,
            stats: EpisodeStats::default(),
            sensing: stream(seed, Stream::Sensing),
            loss: stream(seed, Stream::Loss),
            f_dbw: stream(seed, Stream::FaultDbw),
            f_sa: stream(seed, Stream::FaultSa),
            f_dec: stream(seed, Stream::FaultDecision),
            collisions: Vec::new(),
            contacts: BTreeSet::new(),
            min_ttc: None,
        }
    }

    fn send(&mut self, from: Endpoint, to: Endpoint, msg: Message, now: f64) {
        let r = self.net.send(from, to, &msg, now, &mut self.loss);
        self.stats.messages_sent += 1;
        self.stats.messages_lost += u64::from(r.lost);
        self.rec.full(now, || TraceEvent::Message {
            from: from.to_string(),
            to: to.to_string(),
            kind: msg.kind().into(),
            bytes: r.bytes,
            lost: r.lost,
        });
    }

    fn spawn_due(&mut self, now: f64) {
        let mut keep = Vec::new();
        for spec in std::mem::take(&mut self.pending) {
            if spec.entry_time > now + 1e-9 {
                keep.push(spec);
                continue;
            }
            // Entry waits until the spawn point is clear.
            let blocked = self.agents.iter().any(|a| {
                a.state.on_road()
                    && a.state.occupies(spec.lane)
                    && a.state.rear() - 1.0 < spec.position + 2.0
                    && a.state.position + 1.0 > spec.position - spec.kind.length() - 2.0
            });
            if blocked {
                keep.push(spec);
                continue;
            }
            let state = VehicleState::new(spec.id, spec.kind, spec.position, spec.lane, spec.speed);
            let target = spec.desired_speed.unwrap_or(self.cfg.policy.target_speed);
            let sc = (spec.kind == VehicleKind::Iea).then(|| ScActor {
                id: ScId(spec.id),
                state: ScSessionState::default(),
                sa: None,
                last_sa_time: None,
                next_sea_at: now,
                prev: Actuation::default(),
                ever_registered: false,
                target_speed: target.min(spec.kind.v_max()),
                disengage_at: spec.disengage_at,
                take_over_spot: None,
            });
            let desired_speed = spec.desired_speed.unwrap_or(self.cfg.driver.desired_speed);
            self.agents.push(Agent { state, sc, desired_speed, stall_at: spec.stall_at });
        }
        self.pending = keep;
    }

    fn mssp_index(&self, id: MsspId) -> Option<usize> {
        self.mssps.iter().position(|m| m.id == id)
    }

    fn agent_index(&self, sc: ScId) -> Option<usize> {
        self.agents.iter().position(|a| a.sc.as_ref().is_some_and(|s| s.id == sc))
    }

    fn deliver(&mut self, now: f64) {
        for Delivery { from, to, message } in self.net.deliver_due(now) {
            match to {
                Endpoint::Mssp(m) => self.mssp_receive(m, from, message, now),
                Endpoint::Sc(sc) => {
                    let event = match &message {
                        Message::Sa(frame) => Some(ScEvent::SaReceived(frame.clone())),
                        Message::Control(c) => ScEvent::from_control(c),
                        Message::Sea(_) => None,
                    };
                    if let (Some(event), Some(i)) = (event, self.agent_index(sc)) {
                        self.sc_event(i, &event, now);
                    }
                }
                Endpoint::Cloud => {}
            }
        }
    }

    fn mssp_receive(&mut self, m: MsspId, from: Endpoint, message: Message, now: f64) {
        let Some(mi) = self.mssp_index(m) else { return };
        let input = match message {
            Message::Control(ControlMessage::NeighborTrackShare { tracks, .. }) => {
                self.mssps[mi].neighbor_inbox.extend(tracks);
                return;
            }
            Message::Control(c) => RegistryInput::Control(c),
            Message::Sea(s) => {
                if self.mssps[mi].registry.is_registered(s.sc_id) {
                    self.mssps[mi].sea_inbox.push(s.clone());
                }
                RegistryInput::Sea(s)
            }
            Message::Sa(_) => {
                debug!("{m}: unexpected SA from {from}");
                return;
            }
        };
        let reg = self.mssps[mi].registry.clone();
        let (reg, replies) = mssp_handle(reg, &input, now);
        self.mssps[mi].registry = reg;
        for (sc, msg) in replies {
            self.send(Endpoint::Mssp(m), Endpoint::Sc(sc), Message::Control(msg), now);
        }
    }

    /// Feeds one event to an SC and carries out the resulting actions.
    fn sc_event(&mut self, i: usize, event: &ScEvent, now: f64) {
        let pos = self.agents[i].state.position;
        let sc = self.agents[i].sc.as_mut().expect("agent has an SC");
        let before = sc.state.sa_source();
        let step = sc_step(sc.id, pos, &sc.state, event, now, &self.session);
        let changed = step.state.name() != sc.state.name();
        sc.state = step.state;
        if sc.state.sa_source() != before {
            sc.sa = None;
        }
        if sc.state.is_registered() {
            sc.ever_registered = true;
        }
        let id = sc.id;
        let mut sends = Vec::new();
        for action in step.actions {
            match action {
                ScAction::DeliverSa(frame) => {
                    debug_assert!(sc.state.sa_source() == Some(frame.mssp_id));
                    sc.last_sa_time = Some(frame.timestamp);
                    sc.sa = Some(frame);
                }
                ScAction::Send { to, msg } => sends.push((to, msg)),
            }
        }
        let state_name = sc.state.name();
        if changed {
            self.rec.full(now, || TraceEvent::Session { sc: id, state: state_name.into() });
        }
        for (to, msg) in sends {
            if matches!(msg, ControlMessage::HandoffComplete { .. }) {
                self.stats.handoffs += 1;
            }
            self.send(Endpoint::Sc(id), Endpoint::Mssp(to), Message::Control(msg), now);
        }
    }

    fn truth(&self) -> Vec<TruthObject> {
        self.agents
            .iter()
            .filter(|a| a.state.on_road())
            .map(|a| TruthObject {
                id: a.state.id,
                class: a.state.kind.class(),
                position: a.state.position,
                lane: a.state.lane,
            })
            .collect()
    }

    fn perceive(&mut self, now: f64) -> Result<(), SimError> {
        let dt = self.cfg.dt;
        let params = &self.cfg.perception;
        let truth = self.truth();
        let thresholds = IncidentThresholds { lane_count: self.cfg.corridor.lanes, ..params.incidents.clone() };
        let mut outgoing: Vec<(Endpoint, Endpoint, Message)> = Vec::new();
        for mi in 0..self.mssps.len() {
            let m = &mut self.mssps[mi];
            let reg = std::mem::replace(&mut m.registry, MsspRegistry::new(RegistryConfig::new(m.id, m.coverage, 1)));
            m.registry = mssp_handle(reg, &RegistryInput::Tick, now).0;

            let mut dets = Vec::new();
            for (k, spec) in m.placement.sensors.iter().enumerate() {
                dets.extend(sense(&truth, spec, k as u16, now, &mut self.sensing));
            }
            let dets = merge_detections(dets, params.gate);
            let predicted: Vec<Track> = m.tracks.iter().map(|t| predict(t, dt, &params.observer)).collect();
            let assoc = associate(&predicted, &dets, params.gate);
            let mut tracks = Vec::with_capacity(m.tracks.len() + assoc.unmatched_detections.len());
            for (ti, t) in m.tracks.iter().enumerate() {
                let det = assoc.detection_for(ti).map(|di| &dets[di]);
                let updated = observer_update(t, det, dt, &params.observer)?;
                if !params.observer.should_drop(&updated) {
                    tracks.push(updated);
                }
            }
            for &di in &assoc.unmatched_detections {
                let id = TrackId(u32::from(m.id.0) << 20 | (m.next_track & 0xF_FFFF));
                m.next_track += 1;
                tracks.push(spawn_track(id, &dets[di], &params.observer));
            }
            let neighbor = std::mem::take(&mut m.neighbor_inbox);
            let sea = std::mem::take(&mut m.sea_inbox);
            let mut tracks = reconcile(tracks, &neighbor, &sea, now, m.coverage, &params.reconcile, &params.observer)?;
            tracks.sort_by_key(|t| t.id);
            m.tracks = tracks;

            let incidents = detect_incidents(&mut m.monitor, &m.tracks, now, dt, &thresholds);
            for inc in &incidents {
                if let Some(tid) = inc.track_id {
                    if m.uploaded.insert(tid) {
                        let (id, incident) = (m.id, inc.clone());
                        self.rec.full(now, || TraceEvent::Incident { mssp: id, incident: incident.clone() });
                        outgoing.push((
                            Endpoint::Mssp(id),
                            Endpoint::Cloud,
                            Message::Control(ControlMessage::IncidentUpload { mssp_id: id, incident }),
                        ));
                    }
                }
            }

            if now + 1e-9 >= m.next_sa_at {
                m.next_sa_at = now + self.cfg.network.sa_period;
                let mut frame = compose_sa(&m.tracks, &incidents, m.id, m.seq, now, m.coverage, params.confirm_hits);
                m.seq = frame.frame_seq;
                let total = frame.tracks.len();
                if self.faults.sa {
                    let (q, bias) = (self.cfg.faults.q_sa, self.cfg.faults.b_sa);
                    let rng = &mut self.f_sa;
                    frame.tracks.retain_mut(|t| {
                        t.position += bias;
                        rng.random::<f64>() >= q
                    });
                }
                let id = m.id;
                let published = frame.tracks.len();
                let rows: Vec<TrackRecord> = if self.rec.detail == TraceDetail::Full {
                    m.tracks
                        .iter()
                        .map(|t| TrackRecord {
                            id: t.id.0,
                            pos: t.position,
                            vel: t.velocity,
                            lane: t.lane,
                            var_pos: t.covariance.pp,
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let seq = frame.frame_seq;
                self.rec.full(now, || TraceEvent::Tracks {
                    mssp: id,
                    frame_seq: seq,
                    published,
                    dropped: total - published,
                    tracks: rows,
                });
                for sc in m.registry.registered() {
                    outgoing.push((Endpoint::Mssp(id), Endpoint::Sc(sc), Message::Sa(frame.clone())));
                }
                let share: Vec<Track> = m
                    .tracks
                    .iter()
                    .filter(|t| t.is_confirmed(params.confirm_hits) && t.last_update >= now - 1e-9)
                    .cloned()
                    .collect();
                if !share.is_empty() {
                    for &nb in &m.neighbors {
                        outgoing.push((
                            Endpoint::Mssp(id),
                            Endpoint::Mssp(nb),
                            Message::Control(ControlMessage::NeighborTrackShare { from: id, tracks: share.clone() }),
                        ));
                    }
                }
            }
        }
        for (from, to, msg) in outgoing {
            self.send(from, to, msg, now);
        }
        Ok(())
    }

    /// Session upkeep, decisions and actuation for every agent. All
    /// actuations are chosen from the same pre-step world before anyone moves.
    fn drive(&mut self, now: f64) {
        let dt = self.cfg.dt;
        let mut actuations = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let a =
                if self.agents[i].sc.is_some() { self.drive_iea(i, now) } else { Some(self.manual_actuation(i, now)) };
            actuations.push(a);
        }
        let mut parked = Vec::new();
        for (i, a) in actuations.into_iter().enumerate() {
            let Some(a) = a else { continue };
            let agent = &mut self.agents[i];
            let mut next = step_vehicle(&agent.state, &a, dt, self.cfg.envelope.lane_change_duration);
            if let Some(spot) = agent.sc.as_ref().and_then(|s| s.take_over_spot) {
                if next.mode == DriveMode::TakeOverPending
                    && next.speed <= 0.05
                    && next.lane == 0
                    && next.lane_change.is_none()
                    && (spot - next.position).abs() <= 10.0
                {
                    next.mode = DriveMode::Parked;
                    next.speed = 0.0;
                    parked.push(i);
                }
            }
            agent.state = next;
        }
        for i in parked {
            self.sc_event(i, &ScEvent::ExitCorridor, now);
        }
    }

    fn manual_actuation(&self, i: usize, now: f64) -> Actuation {
        let agent = &self.agents[i];
        let v = &agent.state;
        match v.kind {
            VehicleKind::Bicycle | VehicleKind::Pedestrian => Actuation::accel(0.0),
            _ if agent.stall_at.is_some_and(|t| now + 1e-9 >= t) => {
                Actuation::accel((-v.speed / self.cfg.dt).max(-self.cfg.driver.comfort_decel))
            }
            _ => {
                let leader = self.leader_of(i);
                let params =
                    super::vehicle::DriverParams { desired_speed: agent.desired_speed, ..self.cfg.driver.clone() };
                manual_driver(v, leader, &params)
            }
        }
    }

    /// Nearest on-road body ahead sharing a lane, as (bumper gap, speed).
    fn leader_of(&self, i: usize) -> Option<(f64, f64)> {
        let me = &self.agents[i].state;
        self.agents
            .iter()
            .enumerate()
            .filter(|(j, o)| {
                *j != i
                    && o.state.on_road()
                    && o.state.position > me.position
                    && (o.state.occupies(me.lane) || me.lane_change.is_some_and(|lc| o.state.occupies(lc.target)))
            })
            .map(|(_, o)| (o.state.rear() - me.position, o.state.speed))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Returns the actuation for an IEA vehicle, or `None` once parked.
    fn drive_iea(&mut self, i: usize, now: f64) -> Option<Actuation> {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let pos = self.agents[i].state.position;
        let speed = self.agents[i].state.speed;

        let deadline = self.agents[i].sc.as_ref().and_then(|s| s.state.deadline());
        if deadline.is_some_and(|d| now + 1e-9 >= d) {
            self.sc_event(i, &ScEvent::Timeout, now);
        }
        let session = self.agents[i].sc.as_ref().expect("iea agent").state.clone();
        match &session {
            ScSessionState::Unregistered { pending: None, .. } => {
                if let Some(&(m, _)) = self.cells.iter().find(|(_, (a, b))| *a <= pos && pos <= *b) {
                    self.sc_event(i, &ScEvent::EnterCell(m), now);
                }
            }
            ScSessionState::Registered { mssp, .. } => {
                if let Ok(Some(target)) = plan_handoff(&self.cells, pos, speed, cfg.network.handoff_lead) {
                    let ahead = |m: MsspId| self.cells.iter().position(|c| c.0 == m);
                    if target != *mssp && ahead(target) > ahead(*mssp) {
                        self.sc_event(i, &ScEvent::HandoffNeeded(target), now);
                    }
                }
            }
            _ => {}
        }

        let sc = self.agents[i].sc.as_ref().expect("iea agent");
        if sc.disengage_at.is_some_and(|t| now + 1e-9 >= t) && self.agents[i].state.mode == DriveMode::Engaged {
            let stop = speed * speed / (2.0 * cfg.policy.comfort_decel);
            let spot = cfg.corridor.take_over_spots.iter().copied().filter(|s| *s >= pos + stop).min_by(f64::total_cmp);
            match spot {
                Some(s) => {
                    self.agents[i].state.mode = DriveMode::TakeOverPending;
                    self.agents[i].sc.as_mut().expect("iea agent").take_over_spot = Some(s);
                }
                None => debug!("vehicle {}: no take-over spot ahead of {pos:.1}", self.agents[i].state.id),
            }
        }
        let state = self.agents[i].state.clone();
        if state.mode == DriveMode::Parked {
            return None;
        }

        let sc = self.agents[i].sc.as_ref().expect("iea agent");
        let sea = SeaReport {
            sc_id: sc.id,
            timestamp: now,
            position: state.position,
            lane: state.lane,
            speed: state.speed,
            dbw_status: DbwStatus::Ok,
        };
        let mut decision = match &sc.sa {
            Some(sa) => {
                sc_decide(sa, &sea, state.lane_change.map(|lc| lc.target), now, dt, &cfg.policy, cfg.corridor.lanes)
            }
            None => {
                let fresh = sc.last_sa_time.is_some_and(|t| now - t <= cfg.policy.t_stale)
                    || (!sc.ever_registered && now <= cfg.policy.t_stale);
                if fresh || !sc.ever_registered {
                    Decision { command: DbwCommand::HoldLane, reason: DecisionReason::FreeFlow, stale: false }
                } else {
                    Decision {
                        command: DbwCommand::SetSpeed((state.speed - cfg.policy.stale_decel * dt).max(0.0)),
                        reason: DecisionReason::StaleSa,
                        stale: true,
                    }
                }
            }
        };
        if let DbwCommand::SetSpeed(x) = &mut decision.command {
            *x = x.min(sc.target_speed);
        }
        if state.mode == DriveMode::TakeOverPending {
            decision.command =
                self.take_over_command(&state, sc.take_over_spot.expect("spot chosen"), &decision.command);
        }
        let mut inverted = false;
        if self.faults.decision && self.f_dec.random::<f64>() < cfg.faults.q_dec {
            decision.command = invert_command(&decision.command, state.speed, &cfg.policy, state.kind.v_max());
            inverted = true;
        }
        let fault = self.faults.dbw.then_some(cfg.faults.q_dbw);
        let result = execute_dbw(
            &state,
            &decision.command,
            &cfg.envelope,
            cfg.corridor.lanes,
            dt,
            &sc.prev,
            fault,
            &mut self.f_dbw,
        );
        self.stats.commands += 1;
        self.stats.stale_decisions += u64::from(decision.stale);
        self.stats.inverted_commands += u64::from(inverted);
        self.stats.ignored_commands += u64::from(result.ignored);
        let vid = state.id;
        self.rec.full(now, || TraceEvent::Command {
            vehicle: vid,
            command: decision.command,
            reason: decision.reason,
            stale: decision.stale,
            inverted,
            ignored: result.ignored,
            rejected: result.rejection,
        });
        let sc = self.agents[i].sc.as_mut().expect("iea agent");
        sc.prev = Actuation::accel(result.actuation.accel);
        if now + 1e-9 >= sc.next_sea_at {
            sc.next_sea_at = now + cfg.network.sea_period;
            if let Some(m) = sc.state.serving() {
                let id = sc.id;
                self.send(Endpoint::Sc(id), Endpoint::Mssp(m), Message::Sea(sea), now);
            }
        }
        Some(result.actuation)
    }

    fn take_over_command(&self, v: &VehicleState, spot: f64, planned: &DbwCommand) -> DbwCommand {
        let p = &self.cfg.policy;
        if v.lane > 0 {
            return match planned {
                DbwCommand::LaneChange(_) | DbwCommand::SetSpeed(_) if v.lane_change.is_none() => {
                    DbwCommand::LaneChange(LaneDir::Right)
                }
                other => *other,
            };
        }
        let room = (spot - v.position).max(0.0);
        let allowed = (2.0 * p.comfort_decel * room).sqrt();
        match planned {
            DbwCommand::SetSpeed(x) => DbwCommand::SetSpeed(x.min(allowed)),
            _ => DbwCommand::SetSpeed(v.speed.min(allowed)),
        }
    }

    /// Exits, collisions and near misses after every body has moved; then
    /// records the tick.
    fn advance(&mut self, t: f64) {
        let exit = self.cfg.corridor.exit();
        let mut gone = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            if a.state.position > exit {
                gone.push(i);
            }
        }
        for &i in gone.iter().rev() {
            if self.agents[i].sc.is_some() {
                self.sc_event(i, &ScEvent::ExitCorridor, t);
            }
            self.agents.remove(i);
            self.stats.exited += 1;
        }

        let road: Vec<&VehicleState> = self.agents.iter().map(|a| &a.state).filter(|s| s.on_road()).collect();
        for (x, a) in road.iter().enumerate() {
            for b in &road[x + 1..] {
                let key = (a.id.min(b.id), a.id.max(b.id));
                if in_contact(a, b) {
                    if self.contacts.insert(key) {
                        let dv = (a.speed - b.speed).abs();
                        self.collisions.push(CollisionEvent {
                            t,
                            a: key.0,
                            b: key.1,
                            dv,
                            class: impact_class(dv, &self.cfg.classifier),
                        });
                    }
                } else if let Some(ttc) = time_to_collision(a, b) {
                    self.min_ttc = Some(self.min_ttc.map_or(ttc, |m| m.min(ttc)));
                }
            }
        }
        for c in self.collisions.iter().filter(|c| c.t == t) {
            self.rec.always(t, TraceEvent::Collision { a: c.a, b: c.b, dv: c.dv, class: c.class });
        }

        for a in &self.agents {
            if let Some(sc) = &a.sc {
                if a.state.mode != DriveMode::Parked && sc.ever_registered && !sc.state.is_registered() {
                    self.stats.session_gap_ticks += 1;
                }
            }
        }
        self.record_tick(t);
    }

    fn record_tick(&mut self, t: f64) {
        let agents = &self.agents;
        self.rec
            .full(t, || TraceEvent::Tick { vehicles: agents.iter().map(|a| VehicleRecord::from(&a.state)).collect() });
    }
}
