//! Command implementations behind the `iea` binary.
//!
//! Every command returns its results as values and writes its artifacts
//! into an output directory; the binary only formats and maps errors to
//! exit codes. Scientific outputs are byte-reproducible. Wall-clock
//! metadata goes to `manifest.json` alone.

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use iea_core::risk::{build_risk_report, load_model_file, BlameFunction, ModelFileError, RiskReport};
use iea_core::sim::{
    estimate_outcome_likelihood, replay_trace_file, run_episode, write_trace_file, Estimate, FaultAssignment,
    ReplaySummary, ScenarioConfig, SimError,
};
use iea_core::FaultModel;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

const MODEL_SCHEMA: &str = "\
Model files are line oriented; `#` starts a comment.

  [components]            one `name = p` line per component, 0 <= p <= 1
  [outcomes]              one label per line, optionally `label = severity`
  [likelihood]            `exactly_k_faults`, or rows `f=<bits> s1:0.2 s2:0.8`
  [blame]                 `proportional`, or `custom` then rows
                          `f=<bits> <outcome>: b1 b2 ...`";

const SCENARIO_SCHEMA: &str = "\
Scenario files are TOML with top-level `name`, `horizon` and optional `dt`,
and the tables [corridor] (length, lanes, min_overlap, take_over_spots),
[[mssp]] (id, position, coverage, capacity, [[mssp.sensors]]), [network],
[[vehicles]] (id, kind = iea|manual, lane, position, speed, desired_speed,
stall_at, disengage_at), [arrivals], [policy], [envelope], [driver],
[faults] (q_dbw, q_sa, b_sa, q_dec), [classifier] and [perception].";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration.
    #[error("{0}")]
    Input(String),
    /// Stored data failed verification.
    #[error("{0}")]
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Integrity { .. } => CliError::Integrity(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "iea",
    version,
    about = "Corridor simulation and blame attribution for infrastructure-enabled autonomy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Risk computations.
    #[command(subcommand)]
    Risk(RiskCommand),
    /// Simulation runs.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Re-check a stored trace.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum RiskCommand {
    /// Exact blame report for a model file.
    #[command(after_long_help = MODEL_SCHEMA)]
    Exact(ExactArgs),
    /// Estimate the outcome likelihood by simulation, then attribute blame.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Estimate(EstimateArgs),
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run one episode and write its trace.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    pub model: PathBuf,
    /// Write risk_report.json and manifest.json here instead of printing.
    #[arg(long, env = "IEA_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub scenario: PathBuf,
    /// Episodes per fault configuration.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fault probabilities for dbw, sa and decision.
    #[arg(long, default_value = "0.05,0.1,0.3", value_parser = parse_probabilities)]
    pub p: [f64; 3],
    #[arg(long, env = "IEA_OUT_DIR", default_value = "iea-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Fault bits for dbw, sa and decision, e.g. `010`.
    #[arg(long, default_value = "000", value_parser = parse_fault)]
    pub fault: FaultAssignment,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "IEA_OUT_DIR", default_value = "iea-out")]
    pub out: PathBuf,
    /// Gzip the trace.
    #[arg(long)]
    pub gzip: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
}

fn parse_probabilities(s: &str) -> Result<[f64; 3], String> {
    let values: Vec<f64> =
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))).collect::<Result<_, _>>()?;
    let arr: [f64; 3] =
        values.try_into().map_err(|v: Vec<f64>| format!("expected 3 probabilities, got {}", v.len()))?;
    if arr.iter().all(|p| (0.0..=1.0).contains(p)) {
        Ok(arr)
    } else {
        Err("probabilities must lie in [0, 1]".into())
    }
}

fn parse_fault(s: &str) -> Result<FaultAssignment, String> {
    FaultAssignment::parse(s).ok_or_else(|| format!("`{s}` is not a 3-bit fault assignment"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub configs: Vec<ConfigDigest>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub wall_seconds: f64,
}

struct Clock {
    wall: DateTime<Utc>,
    mono: Instant,
}

impl Clock {
    fn start() -> Self {
        Self { wall: Utc::now(), mono: Instant::now() }
    }

    fn manifest(&self, command: &str, configs: Vec<ConfigDigest>, seeds: Vec<u64>) -> RunManifest {
        RunManifest {
            command: command.into(),
            configs,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started: self.wall.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            wall_seconds: self.mono.elapsed().as_secs_f64(),
        }
    }
}

/// Reads a config file once so the digest and the parse see the same bytes.
fn read_config(path: &Path) -> Result<(String, ConfigDigest), CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let digest = ConfigDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) };
    let text = String::from_utf8(bytes).map_err(|_| io_err(path, "not UTF-8"))?;
    Ok((text, digest))
}

fn load_scenario(path: &Path) -> Result<(ScenarioConfig, ConfigDigest), CliError> {
    let (text, digest) = read_config(path)?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| io_err(path, e))?;
    Ok((cfg, digest))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_file(path, text)
}

pub struct ExactOutput {
    pub report: RiskReport,
    pub written: Option<PathBuf>,
}

pub fn risk_exact(args: &ExactArgs) -> Result<ExactOutput, CliError> {
    let clock = Clock::start();
    let (_, digest) = read_config(&args.model)?;
    let file = load_model_file(&args.model).map_err(|e| match e {
        ModelFileError::Parse(p) => {
            CliError::Input(format!("{}:{}:{}: {}", args.model.display(), p.line, p.column, p.message))
        }
        other => io_err(&args.model, other),
    })?;
    let report = build_risk_report(&file.model, &file.likelihood, &file.blame).map_err(|e| io_err(&args.model, e))?;
    let written = match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("risk_report.json");
            write_file(&path, report.to_json() + "\n")?;
            write_json(&dir.join("manifest.json"), &clock.manifest("risk exact", vec![digest], vec![]))?;
            Some(path)
        }
        None => None,
    };
    Ok(ExactOutput { report, written })
}

/// Per-configuration likelihood table with Wilson 95% half-widths.
pub fn likelihood_csv(est: &Estimate) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let labels = ["s1", "s2", "s3", "s4"];
    let mut header = vec!["config".to_string(), "episodes".into()];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    header.extend(labels.iter().map(|l| format!("half_width_{l}")));
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (f, fa) in FaultAssignment::all().iter().enumerate() {
        let mut row = vec![fa.to_string(), est.likelihood.episodes(f).to_string()];
        row.extend((0..4).map(|s| est.likelihood.probability(f, s).to_string()));
        row.extend((0..4).map(|s| est.likelihood.half_width(f, s, 1.96).to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn episodes_csv(est: &Estimate) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &est.rows {
        w.serialize(row).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn summary_text(scenario: &str, est: &Estimate, report: &RiskReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {scenario}, {} episodes per fault configuration", est.episodes_per_config);
    let _ = writeln!(s, "fault probabilities {:?} for {:?}", report.fault_probabilities, report.components);
    let _ = writeln!(s);
    let _ = writeln!(s, "config   s1      s2      s3      s4");
    for (f, fa) in FaultAssignment::all().iter().enumerate() {
        let cells: Vec<String> = (0..4).map(|k| format!("{:.4}", est.likelihood.probability(f, k))).collect();
        let _ = writeln!(s, "{fa}      {}", cells.join("  "));
    }
    let _ = writeln!(s);
    for o in &report.outcomes {
        match &o.proportions_percent {
            Some(p) => {
                let shares: Vec<String> = p.iter().map(|x| format!("{x:.2}%")).collect();
                let _ = writeln!(s, "{}: P = {:.6}, responsibility {}", o.outcome, o.probability, shares.join(" / "));
            }
            None => {
                let _ = writeln!(s, "{}: P = {:.6}, not attributable", o.outcome, o.probability);
            }
        }
    }
    s
}

pub struct EstimateOutput {
    pub estimate: Estimate,
    pub report: RiskReport,
    pub dir: PathBuf,
}

/// Runs every fault configuration `episodes` times, builds the empirical
/// likelihood and attributes blame over it. Writes the report bundle.
pub fn risk_estimate(args: &EstimateArgs) -> Result<EstimateOutput, CliError> {
    let clock = Clock::start();
    let (cfg, digest) = load_scenario(&args.scenario)?;
    let model = FaultModel::new(FaultAssignment::COMPONENTS.iter().map(|c| c.to_string()).collect(), args.p.to_vec())
        .map_err(|e| CliError::Input(e.to_string()))?;
    log::info!("running {} episodes of {}", 8 * args.episodes, cfg.name);
    let estimate = estimate_outcome_likelihood(&cfg, args.episodes, args.seed)?;
    let lik = estimate.likelihood.to_likelihood().map_err(|e| CliError::Input(e.to_string()))?;
    let report = build_risk_report(&model, &lik, &BlameFunction::ProportionalShare)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let dir = args.out.clone();
    create_dir(&dir)?;
    write_file(&dir.join("risk_report.json"), report.to_json() + "\n")?;
    write_file(&dir.join("likelihood.csv"), likelihood_csv(&estimate)?)?;
    write_file(&dir.join("episodes.csv"), episodes_csv(&estimate)?)?;
    write_file(&dir.join("summary.txt"), summary_text(&cfg.name, &estimate, &report))?;
    write_json(&dir.join("manifest.json"), &clock.manifest("risk estimate", vec![digest], vec![args.seed]))?;
    Ok(EstimateOutput { estimate, report, dir })
}

pub struct RunOutput {
    pub outcome: String,
    pub hash: String,
    pub trace: PathBuf,
}

pub fn sim_run(args: &RunArgs) -> Result<RunOutput, CliError> {
    let clock = Clock::start();
    let (cfg, digest) = load_scenario(&args.scenario)?;
    let trace = run_episode(&cfg, args.fault, args.seed)?;
    create_dir(&args.out)?;
    let ext = if args.gzip { "jsonl.gz" } else { "jsonl" };
    let path = args.out.join(format!("trace_{}_{}_{}.{ext}", cfg.name, args.fault, args.seed));
    write_trace_file(&path, &trace.records).map_err(|e| io_err(&path, e))?;
    write_json(&args.out.join("manifest.json"), &clock.manifest("sim run", vec![digest], vec![args.seed]))?;
    Ok(RunOutput { outcome: trace.outcome.as_str().into(), hash: iea_core::sim::format_hash(trace.hash), trace: path })
}

/// Replays a trace. Unreadable or structurally broken traces are integrity
/// errors; so is a readable trace that breaks any rule.
pub fn replay(args: &ReplayArgs) -> Result<ReplaySummary, CliError> {
    if !args.trace.exists() {
        return Err(CliError::Input(format!("{}: no such file", args.trace.display())));
    }
    Ok(replay_trace_file(&args.trace)?)
}
