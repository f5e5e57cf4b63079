//! Episode traces: newline-delimited JSON, optionally gzip-compressed.
//!
//! Each line is one record `{"t":..,"seq":..,"type":..,...}`. The trace hash
//! is FNV-1a 64 over the UTF-8 bytes of every line before the final `end`
//! record, each followed by `\n`, rendered as 16 lowercase hex digits. The
//! `end` record stores the record count and that hash.

use super::decision::DecisionReason;
use super::vehicle::{DbwCommand, DbwRejection, DriveMode, VehicleKind, VehicleState};
use super::SimError;
use crate::ids::{MsspId, ScId};
use crate::perception::Incident;
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// How much of an episode is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceDetail {
    /// Every tick, message, command and session change.
    #[default]
    Full,
    /// Header, collisions and the outcome only.
    Outcome,
}

/// Per-kind motion bounds used when replaying a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindLimits {
    pub kind: VehicleKind,
    pub max_accel: f64,
    pub max_decel: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u32,
    pub kind: VehicleKind,
    pub pos: f64,
    pub lane: u8,
    pub speed: f64,
    pub accel: f64,
    pub mode: DriveMode,
    /// Lane-change progress in [0, 1) with the target lane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lc: Option<(u8, f64)>,
}

impl From<&VehicleState> for VehicleRecord {
    fn from(v: &VehicleState) -> Self {
        Self {
            id: v.id,
            kind: v.kind,
            pos: v.position,
            lane: v.lane,
            speed: v.speed,
            accel: v.accel,
            mode: v.mode,
            lc: v.lane_change.map(|lc| (lc.target, lc.progress)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactClass {
    Graze,
    Minor,
    Severe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u32,
    pub pos: f64,
    pub vel: f64,
    pub lane: u8,
    pub var_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Header {
        scenario: String,
        seed: u64,
        faults: String,
        dt: f64,
        lanes: u8,
        limits: Vec<KindLimits>,
    },
    Tick {
        vehicles: Vec<VehicleRecord>,
    },
    Message {
        from: String,
        to: String,
        kind: String,
        bytes: usize,
        lost: bool,
    },
    Session {
        sc: ScId,
        state: String,
    },
    Command {
        vehicle: u32,
        command: DbwCommand,
        reason: DecisionReason,
        stale: bool,
        inverted: bool,
        ignored: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejected: Option<DbwRejection>,
    },
    Tracks {
        mssp: MsspId,
        frame_seq: u32,
        published: usize,
        dropped: usize,
        tracks: Vec<TrackRecord>,
    },
    Incident {
        mssp: MsspId,
        incident: Incident,
    },
    Collision {
        a: u32,
        b: u32,
        dv: f64,
        class: ImpactClass,
    },
    Outcome {
        label: String,
        min_ttc: Option<f64>,
        collisions: usize,
        terminated_early: bool,
    },
    End {
        records: u64,
        hash: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

pub fn format_hash(h: u64) -> String {
    format!("{h:016x}")
}

/// Incremental trace hasher; see the module docs for the definition.
#[derive(Default)]
pub struct TraceHasher(FnvHasher);

impl TraceHasher {
    pub fn push_line(&mut self, line: &str) {
        self.0.write(line.as_bytes());
        self.0.write(b"\n");
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }
}

pub fn hash_records(records: &[TraceRecord]) -> u64 {
    let mut h = TraceHasher::default();
    for r in records {
        h.push_line(&r.to_line());
    }
    h.finish()
}

/// Writes records plus the closing `end` record.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<u64> {
    let mut h = TraceHasher::default();
    for r in records {
        let line = r.to_line();
        h.push_line(&line);
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    let hash = h.finish();
    let last = records.last().map_or((0.0, 0), |r| (r.t, r.seq + 1));
    let end = TraceRecord {
        t: last.0,
        seq: last.1,
        event: TraceEvent::End { records: records.len() as u64, hash: format_hash(hash) },
    };
    out.write_all(end.to_line().as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(hash)
}

/// Writes to `path`, gzip-compressed when it ends in `.gz`.
pub fn write_trace_file(path: &Path, records: &[TraceRecord]) -> std::io::Result<u64> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzEncoder::new(file, Compression::default());
        let h = write_trace(&mut gz, records)?;
        gz.finish()?.flush()?;
        Ok(h)
    } else {
        write_trace(file, records)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Zero-based record (line) index.
    pub index: usize,
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub records: usize,
    pub ticks: usize,
    pub outcome: Option<String>,
    pub hash: String,
    pub violations: Vec<Violation>,
}

impl ReplaySummary {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

const TOL: f64 = 1e-6;

/// Re-checks a stored trace: record order, per-tick displacement bounds and
/// acceleration envelopes, the stored hash and the presence of the `end`
/// record. Unparseable records and missing terminators are integrity errors;
/// rule breaches are reported as violations.
pub fn replay_trace<R: Read>(input: R) -> Result<ReplaySummary, SimError> {
    let reader = BufReader::new(input);
    let mut hasher = TraceHasher::default();
    let mut violations = Vec::new();
    let mut dt = None;
    let mut limits: BTreeMap<VehicleKind, KindLimits> = BTreeMap::new();
    let mut dbw_fault = false;
    let mut last_key: Option<(f64, u64)> = None;
    let mut prev_tick: Option<(f64, BTreeMap<u32, VehicleRecord>)> = None;
    let mut ticks = 0;
    let mut outcome = None;
    let mut end = None;
    let mut count = 0;

    for (index, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(|e| SimError::Integrity { index, reason: format!("read failed: {e}") })?;
        if end.is_some() {
            return Err(SimError::Integrity { index, reason: "records after end".into() });
        }
        let text = std::str::from_utf8(&line).map_err(|_| SimError::Integrity { index, reason: "not UTF-8".into() })?;
        let rec: TraceRecord = serde_json::from_str(text)
            .map_err(|e| SimError::Integrity { index, reason: format!("unparseable record: {e}") })?;
        if let TraceEvent::End { records, hash } = &rec.event {
            end = Some((index, *records, hash.clone()));
            continue;
        }
        hasher.push_line(text);
        count += 1;
        let key = (rec.t, rec.seq);
        if let Some(prev) = last_key {
            if !(key.0 >= prev.0 && key.1 > prev.1) {
                violations.push(Violation {
                    index,
                    rule: "time_order",
                    detail: format!("(t={}, seq={}) after (t={}, seq={})", key.0, key.1, prev.0, prev.1),
                });
            }
        }
        last_key = Some(key);
        match rec.event {
            TraceEvent::Header { dt: d, limits: l, faults, .. } => {
                dt = Some(d);
                limits = l.into_iter().map(|k| (k.kind, k)).collect();
                dbw_fault = faults.starts_with('1');
            }
            TraceEvent::Tick { vehicles } => {
                ticks += 1;
                let now: BTreeMap<u32, VehicleRecord> = vehicles.into_iter().map(|v| (v.id, v)).collect();
                if let (Some((t0, prev)), Some(_)) = (&prev_tick, dt) {
                    let step = rec.t - t0;
                    for (id, v) in &now {
                        let Some(p) = prev.get(id) else { continue };
                        let Some(lim) = limits.get(&v.kind) else { continue };
                        let bound = (p.speed + lim.max_accel * step) * step;
                        let moved = v.pos - p.pos;
                        if moved.abs() > bound + TOL {
                            violations.push(Violation {
                                index,
                                rule: "no_teleportation",
                                detail: format!("vehicle {id} moved {moved:.4} m, bound {bound:.4} m"),
                            });
                        }
                        let enveloped = v.kind != VehicleKind::Iea || !dbw_fault;
                        if enveloped && (v.accel > lim.max_accel + TOL || v.accel < -lim.max_decel - TOL) {
                            violations.push(Violation {
                                index,
                                rule: "envelope",
                                detail: format!(
                                    "vehicle {id} accel {:.4} outside [-{}, {}]",
                                    v.accel, lim.max_decel, lim.max_accel
                                ),
                            });
                        }
                    }
                }
                prev_tick = Some((rec.t, now));
            }
            TraceEvent::Outcome { label, .. } => outcome = Some(label),
            _ => {}
        }
    }

    let Some((index, records, stored)) = end else {
        return Err(SimError::Integrity { index: count, reason: "missing end record (truncated trace)".into() });
    };
    let hash = format_hash(hasher.finish());
    if records != count as u64 {
        violations.push(Violation {
            index,
            rule: "record_count",
            detail: format!("end says {records}, found {count}"),
        });
    }
    if stored != hash {
        violations.push(Violation { index, rule: "hash", detail: format!("stored {stored}, computed {hash}") });
    }
    if outcome.is_none() {
        violations.push(Violation { index, rule: "outcome", detail: "no outcome record".into() });
    }
    Ok(ReplaySummary { records: count, ticks, outcome, hash, violations })
}

/// Opens a trace, transparently decompressing gzip.
pub fn replay_trace_file(path: &Path) -> Result<ReplaySummary, SimError> {
    let mut file = std::fs::File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| SimError::Io(e.to_string()))?;
    let file = std::fs::File::open(path).map_err(|e| SimError::Io(e.to_string()))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        replay_trace(MultiGzDecoder::new(file))
    } else {
        replay_trace(file)
    }
}
