//! Exact blame attribution over a network of independent component faults.
//!
//! A system of `n` components is described by per-component fault
//! probabilities. Each fault configuration `f` (a bit per component) produces
//! one of a finite, severity-ordered set of outcomes with probability
//! `P(S=s | F=f)`. Given a blame function assigning a share of an outcome to
//! every component, the expected blame of component `i` conditioned on an
//! outcome is
//!
//! ```text
//! Exp(B_i | S=s) = 1/P(S=s) * sum_f blame_i(f, s) * P(S=s | F=f) * P(F=f)
//! ```
//!
//! Everything here is computed by full enumeration of the `2^n`
//! configurations, which bounds `n` at [`MAX_COMPONENTS`].

mod model_file;
pub mod oracle;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use model_file::{load_model_file, parse_model, ModelFile, ModelFileError, ParseError};

/// Largest component count accepted by exact enumeration (about 10^6 configs).
pub const MAX_COMPONENTS: usize = 20;
/// Largest outcome-space size stored densely.
pub const MAX_OUTCOMES: usize = 16;
/// Tolerance used for probability-sum checks.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("exact enumeration supports 1..={MAX_COMPONENTS} components, got {0}")]
    EnumerationLimit(usize),
    #[error("model error: {0}")]
    Model(String),
    #[error("outcome `{0}` has zero probability; cannot condition on it")]
    NullConditioning(String),
    #[error("every component has zero expected blame at outcome `{0}`")]
    DegenerateProportions(String),
}

fn model_err(msg: impl Into<String>) -> RiskError {
    RiskError::Model(msg.into())
}

fn check_component_count(n: usize) -> Result<(), RiskError> {
    if (1..=MAX_COMPONENTS).contains(&n) {
        Ok(())
    } else {
        Err(RiskError::EnumerationLimit(n))
    }
}

/// Independent per-component fault probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    components: Vec<String>,
    p: Vec<f64>,
}

impl FaultModel {
    pub fn new(components: Vec<String>, p: Vec<f64>) -> Result<Self, RiskError> {
        check_component_count(components.len())?;
        if components.len() != p.len() {
            return Err(model_err(format!("{} component labels but {} probabilities", components.len(), p.len())));
        }
        for (label, &pi) in components.iter().zip(&p) {
            if !(0.0..=1.0).contains(&pi) {
                return Err(model_err(format!("fault probability of `{label}` is {pi}, outside [0,1]")));
            }
        }
        for (idx, label) in components.iter().enumerate() {
            if components[..idx].contains(label) {
                return Err(model_err(format!("duplicate component label `{label}`")));
            }
        }
        Ok(Self { components, p })
    }

    /// Convenience constructor labelling components `c1..cn`.
    pub fn unlabeled(p: Vec<f64>) -> Result<Self, RiskError> {
        let labels = (1..=p.len()).map(|i| format!("c{i}")).collect();
        Self::new(labels, p)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// `P(F=f)` for every configuration, indexed by [`FaultConfig::index`].
    pub fn config_probabilities(&self) -> Vec<f64> {
        let mut probs = vec![1.0];
        for &pi in &self.p {
            probs = probs.iter().flat_map(|&q| [q * (1.0 - pi), q * pi]).collect();
        }
        probs
    }
}

/// One indicator bit per component; `true` means the component is at fault.
///
/// Configurations are indexed so that the first component is the most
/// significant bit, making index order identical to lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultConfig {
    bits: Vec<bool>,
}

impl FaultConfig {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_index(n: usize, index: usize) -> Self {
        let bits = (0..n).map(|i| (index >> (n - 1 - i)) & 1 == 1).collect();
        Self { bits }
    }

    pub fn index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_faulty(&self, component: usize) -> bool {
        self.bits[component]
    }

    pub fn fault_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Parses a bit string such as `"110"`.
    pub fn parse_bits(s: &str) -> Option<Self> {
        if s.is_empty() {
            return None;
        }
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }
}

impl fmt::Display for FaultConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// All `2^n` configurations in lexicographic order.
pub fn enumerate_fault_configs(n: usize) -> Result<Vec<FaultConfig>, RiskError> {
    check_component_count(n)?;
    Ok((0..1usize << n).map(|idx| FaultConfig::from_index(n, idx)).collect())
}

/// `P(F=f) = prod_i p_i^f_i (1-p_i)^(1-f_i)`.
pub fn fault_config_probability(model: &FaultModel, f: &FaultConfig) -> Result<f64, RiskError> {
    if f.len() != model.n() {
        return Err(model_err(format!("fault configuration has {} bits, model has {} components", f.len(), model.n())));
    }
    Ok(model.p.iter().zip(f.bits()).fold(1.0, |acc, (&pi, &fi)| acc * if fi { pi } else { 1.0 - pi }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub severity: i32,
}

/// Mutually exclusive outcomes in ascending severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    outcomes: Vec<Outcome>,
}

impl OutcomeSpace {
    pub fn new(outcomes: Vec<Outcome>) -> Result<Self, RiskError> {
        if outcomes.is_empty() {
            return Err(model_err("outcome space is empty"));
        }
        if outcomes.len() > MAX_OUTCOMES {
            return Err(model_err(format!(
                "{} outcomes exceeds the supported maximum of {MAX_OUTCOMES}",
                outcomes.len()
            )));
        }
        for (idx, o) in outcomes.iter().enumerate() {
            if outcomes[..idx].iter().any(|prev| prev.label == o.label) {
                return Err(model_err(format!("duplicate outcome label `{}`", o.label)));
            }
            if idx > 0 && outcomes[idx - 1].severity >= o.severity {
                return Err(model_err(format!(
                    "severity of `{}` must be strictly greater than `{}`",
                    o.label,
                    outcomes[idx - 1].label
                )));
            }
        }
        Ok(Self { outcomes })
    }

    /// Outcomes ranked `1..=m` in the given order.
    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, RiskError> {
        Self::new(
            labels.into_iter().zip(1..).map(|(label, severity)| Outcome { label: label.into(), severity }).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.outcomes[idx].label
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.label == label)
    }
}

/// Dense table of `P(S=s | F=f)` over every configuration and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeLikelihood {
    n: usize,
    outcomes: OutcomeSpace,
    table: Vec<f64>,
}

impl OutcomeLikelihood {
    /// Builds the table from explicit rows; every configuration must appear
    /// exactly once.
    pub fn from_rows(
        n: usize,
        outcomes: OutcomeSpace,
        rows: impl IntoIterator<Item = (FaultConfig, Vec<f64>)>,
    ) -> Result<Self, RiskError> {
        check_component_count(n)?;
        let m = outcomes.len();
        let configs = 1usize << n;
        let mut table = vec![f64::NAN; configs * m];
        for (f, row) in rows {
            if f.len() != n {
                return Err(model_err(format!("likelihood row f={f} has {} bits, expected {n}", f.len())));
            }
            if row.len() != m {
                return Err(model_err(format!("likelihood row f={f} has {} entries, expected {m}", row.len())));
            }
            let base = f.index() * m;
            if !table[base].is_nan() {
                return Err(model_err(format!("duplicate likelihood row for f={f}")));
            }
            table[base..base + m].copy_from_slice(&row);
        }
        if let Some(missing) = (0..configs).find(|&idx| table[idx * m].is_nan()) {
            return Err(model_err(format!("no likelihood row for f={}", FaultConfig::from_index(n, missing))));
        }
        let lik = Self { n, outcomes, table };
        lik.validate()?;
        Ok(lik)
    }

    pub fn from_fn(
        n: usize,
        outcomes: OutcomeSpace,
        mut row: impl FnMut(&FaultConfig) -> Vec<f64>,
    ) -> Result<Self, RiskError> {
        let rows: Vec<_> = enumerate_fault_configs(n)?
            .into_iter()
            .map(|f| {
                let r = row(&f);
                (f, r)
            })
            .collect();
        Self::from_rows(n, outcomes, rows)
    }

    /// Deterministic map where the outcome at index `k` occurs exactly when
    /// `k` components are at fault. Requires at least `n + 1` outcomes.
    pub fn exactly_k_faults(n: usize, outcomes: OutcomeSpace) -> Result<Self, RiskError> {
        check_component_count(n)?;
        let m = outcomes.len();
        if m < n + 1 {
            return Err(model_err(format!(
                "exactly_k_faults with {n} components needs at least {} outcomes, got {m}",
                n + 1
            )));
        }
        Self::from_fn(n, outcomes, |f| {
            let mut row = vec![0.0; m];
            row[f.fault_count()] = 1.0;
            row
        })
    }

    fn validate(&self) -> Result<(), RiskError> {
        let m = self.outcomes.len();
        for (idx, row) in self.table.chunks(m).enumerate() {
            let f = FaultConfig::from_index(self.n, idx);
            for (s, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(model_err(format!("P({} | f={f}) = {v} is outside [0,1]", self.outcomes.label(s))));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(model_err(format!("likelihood row f={f} sums to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outcomes(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    pub fn get(&self, f_index: usize, s_index: usize) -> f64 {
        self.table[f_index * self.outcomes.len() + s_index]
    }

    pub fn row(&self, f_index: usize) -> &[f64] {
        let m = self.outcomes.len();
        &self.table[f_index * m..(f_index + 1) * m]
    }
}

/// Per-component share of an outcome given the fault configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum BlameFunction {
    /// `f_i / sum_j f_j`, and zero for every component when nothing failed.
    ProportionalShare,
    Custom(CustomBlame),
}

/// Explicit blame values `blame_i(f, s)`; unspecified entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomBlame {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl CustomBlame {
    pub fn zeros(n: usize, m: usize) -> Result<Self, RiskError> {
        check_component_count(n)?;
        Ok(Self { n, m, values: vec![0.0; (1 << n) * m * n] })
    }

    pub fn set(&mut self, f: &FaultConfig, s_index: usize, values: &[f64]) -> Result<(), RiskError> {
        if f.len() != self.n || values.len() != self.n || s_index >= self.m {
            return Err(model_err(format!(
                "custom blame entry for f={f} does not match {} components / {} outcomes",
                self.n, self.m
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(model_err(format!("custom blame value {v} is not finite")));
        }
        let base = (f.index() * self.m + s_index) * self.n;
        self.values[base..base + self.n].copy_from_slice(values);
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, m: self.m, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn from_proportional(n: usize, m: usize) -> Result<Self, RiskError> {
        let mut out = Self::zeros(n, m)?;
        for idx in 0..1usize << n {
            for s in 0..m {
                for i in 0..n {
                    out.values[(idx * m + s) * n + i] = proportional_share(n, idx, i);
                }
            }
        }
        Ok(out)
    }
}

fn proportional_share(n: usize, f_index: usize, component: usize) -> f64 {
    let faults = f_index.count_ones();
    if faults == 0 || (f_index >> (n - 1 - component)) & 1 == 0 {
        0.0
    } else {
        1.0 / f64::from(faults)
    }
}

impl BlameFunction {
    /// `blame_i(f, s)` for the configuration with the given index.
    pub fn value(&self, n: usize, f_index: usize, s_index: usize, component: usize) -> f64 {
        match self {
            BlameFunction::ProportionalShare => proportional_share(n, f_index, component),
            BlameFunction::Custom(c) => c.values[(f_index * c.m + s_index) * c.n + component],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BlameFunction::ProportionalShare => "proportional",
            BlameFunction::Custom(_) => "custom",
        }
    }

    fn check(&self, n: usize, m: usize) -> Result<(), RiskError> {
        match self {
            BlameFunction::ProportionalShare => Ok(()),
            BlameFunction::Custom(c) if c.n == n && c.m == m => Ok(()),
            BlameFunction::Custom(c) => {
                Err(model_err(format!("custom blame table is {}x{}, model is {n} components x {m} outcomes", c.n, c.m)))
            }
        }
    }
}

fn check_compatible(model: &FaultModel, lik: &OutcomeLikelihood) -> Result<(), RiskError> {
    if model.n() != lik.n() {
        return Err(model_err(format!("likelihood covers {} components, model has {}", lik.n(), model.n())));
    }
    Ok(())
}

fn outcome_index(lik: &OutcomeLikelihood, s: &str) -> Result<usize, RiskError> {
    lik.outcomes().index_of(s).ok_or_else(|| model_err(format!("unknown outcome `{s}`")))
}

/// `P(S=s) = sum_f P(S=s | F=f) P(F=f)`.
pub fn outcome_marginal(model: &FaultModel, lik: &OutcomeLikelihood, s: &str) -> Result<f64, RiskError> {
    check_compatible(model, lik)?;
    let s_idx = outcome_index(lik, s)?;
    Ok(marginal_at(&model.config_probabilities(), lik, s_idx))
}

fn marginal_at(config_probs: &[f64], lik: &OutcomeLikelihood, s_idx: usize) -> f64 {
    config_probs.iter().enumerate().map(|(idx, &pf)| lik.get(idx, s_idx) * pf).sum()
}

/// Unnormalized `sum_f blame_i(f,s) P(s|f) P(f)` for every component.
fn blame_numerators(
    n: usize,
    config_probs: &[f64],
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    s_idx: usize,
) -> Vec<f64> {
    let mut num = vec![0.0; n];
    for (idx, &pf) in config_probs.iter().enumerate() {
        let w = lik.get(idx, s_idx) * pf;
        if w == 0.0 {
            continue;
        }
        for (i, acc) in num.iter_mut().enumerate() {
            *acc += blame.value(n, idx, s_idx, i) * w;
        }
    }
    num
}

fn conditional_blames(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    s: &str,
) -> Result<Vec<f64>, RiskError> {
    check_compatible(model, lik)?;
    blame.check(model.n(), lik.outcomes().len())?;
    let s_idx = outcome_index(lik, s)?;
    let probs = model.config_probabilities();
    let marginal = marginal_at(&probs, lik, s_idx);
    if marginal <= 0.0 {
        return Err(RiskError::NullConditioning(s.to_string()));
    }
    Ok(blame_numerators(model.n(), &probs, lik, blame, s_idx).into_iter().map(|v| v / marginal).collect())
}

/// `Exp(B_i | S=s)` by full enumeration.
pub fn expected_blame(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    component: usize,
    s: &str,
) -> Result<f64, RiskError> {
    if component >= model.n() {
        return Err(model_err(format!("component index {component} out of range")));
    }
    Ok(conditional_blames(model, lik, blame, s)?[component])
}

/// Percent share of each component in the total expected blame at `s`.
pub fn responsibility_proportions(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    s: &str,
) -> Result<Vec<f64>, RiskError> {
    proportions_from(&conditional_blames(model, lik, blame, s)?, s)
}

fn proportions_from(blames: &[f64], s: &str) -> Result<Vec<f64>, RiskError> {
    let total: f64 = blames.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(RiskError::DegenerateProportions(s.to_string()));
    }
    Ok(blames.iter().map(|b| 100.0 * b / total).collect())
}

/// Total expected blame borne by a single entity owning every component.
pub fn centralized_cost(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    s: &str,
) -> Result<f64, RiskError> {
    Ok(conditional_blames(model, lik, blame, s)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub outcome: String,
    pub severity: i32,
    pub probability: f64,
    /// `false` when `P(S=s) = 0`; conditional fields are then null.
    pub present: bool,
    pub expected_blame: Option<Vec<f64>>,
    pub centralized_total: Option<f64>,
    pub proportions_percent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub components: Vec<String>,
    pub fault_probabilities: Vec<f64>,
    pub blame_function: String,
    pub outcomes: Vec<OutcomeReport>,
}

impl RiskReport {
    pub fn outcome(&self, label: &str) -> Option<&OutcomeReport> {
        self.outcomes.iter().find(|o| o.outcome == label)
    }

    pub fn marginal_sum(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Evaluates every outcome and component in a single pass over the
/// configurations.
pub fn build_risk_report(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
) -> Result<RiskReport, RiskError> {
    check_compatible(model, lik)?;
    let m = lik.outcomes().len();
    blame.check(model.n(), m)?;
    let probs = model.config_probabilities();
    let outcomes = (0..m)
        .map(|s_idx| {
            let label = lik.outcomes().label(s_idx).to_string();
            let severity = lik.outcomes().outcomes()[s_idx].severity;
            let probability = marginal_at(&probs, lik, s_idx);
            if probability <= 0.0 {
                return OutcomeReport {
                    outcome: label,
                    severity,
                    probability,
                    present: false,
                    expected_blame: None,
                    centralized_total: None,
                    proportions_percent: None,
                };
            }
            let blames: Vec<f64> =
                blame_numerators(model.n(), &probs, lik, blame, s_idx).into_iter().map(|v| v / probability).collect();
            let total = blames.iter().sum();
            let proportions = proportions_from(&blames, &label).ok();
            OutcomeReport {
                outcome: label,
                severity,
                probability,
                present: true,
                expected_blame: Some(blames),
                centralized_total: Some(total),
                proportions_percent: proportions,
            }
        })
        .collect();
    Ok(RiskReport {
        components: model.components().to_vec(),
        fault_probabilities: model.probabilities().to_vec(),
        blame_function: blame.kind().to_string(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> (FaultModel, OutcomeLikelihood) {
        let model = FaultModel::new(vec!["dbw".into(), "sa".into(), "decision".into()], vec![0.05, 0.1, 0.3]).unwrap();
        let outcomes = OutcomeSpace::from_labels(["s1", "s2", "s3", "s4"]).unwrap();
        let lik = OutcomeLikelihood::exactly_k_faults(3, outcomes).unwrap();
        (model, lik)
    }

    #[test]
    fn enumeration_order_and_bounds() {
        let one = enumerate_fault_configs(1).unwrap();
        assert_eq!(one, vec![FaultConfig::new(vec![false]), FaultConfig::new(vec![true])]);
        let three = enumerate_fault_configs(3).unwrap();
        assert_eq!(three.len(), 8);
        assert_eq!(three[0].to_string(), "000");
        assert_eq!(three[7].to_string(), "111");
        assert!(three.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(enumerate_fault_configs(21), Err(RiskError::EnumerationLimit(21)));
        assert_eq!(enumerate_fault_configs(0), Err(RiskError::EnumerationLimit(0)));
    }

    #[test]
    fn config_probability_product_rule() {
        let (model, _) = example();
        let f = FaultConfig::parse_bits("110").unwrap();
        let p = fault_config_probability(&model, &f).unwrap();
        assert!((p - 0.0035).abs() < 1e-15);

        let half = FaultModel::unlabeled(vec![0.5; 6]).unwrap();
        for f in enumerate_fault_configs(6).unwrap() {
            assert_eq!(fault_config_probability(&half, &f).unwrap(), 2f64.powi(-6));
        }
        assert!(fault_config_probability(&model, &FaultConfig::parse_bits("10").unwrap()).is_err());
    }

    #[test]
    fn total_probability_is_one() {
        for n in 1..=10 {
            let p: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 100) as f64 / 100.0).collect();
            let model = FaultModel::unlabeled(p).unwrap();
            let total: f64 =
                enumerate_fault_configs(n).unwrap().iter().map(|f| fault_config_probability(&model, f).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n}: {total}");
            let dense: f64 = model.config_probabilities().iter().sum();
            assert!((dense - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn example_marginal_and_blames() {
        let (model, lik) = example();
        let ps3 = outcome_marginal(&model, &lik, "s3").unwrap();
        assert!((ps3 - 0.0455).abs() < 1e-12);
        let blame = BlameFunction::ProportionalShare;
        let e: Vec<f64> = (0..3).map(|i| expected_blame(&model, &lik, &blame, i, "s3").unwrap()).collect();
        assert!((e[0] - 0.017 / 0.091).abs() < 1e-12);
        assert!((e[1] - 0.032 / 0.091).abs() < 1e-12);
        assert!((e[2] - 0.042 / 0.091).abs() < 1e-12);
        let pct = responsibility_proportions(&model, &lik, &blame, "s3").unwrap();
        assert!((pct[0] - 18.68).abs() < 0.01 && (pct[1] - 35.16).abs() < 0.01 && (pct[2] - 46.15).abs() < 0.01);
        let total = centralized_cost(&model, &lik, &blame, "s3").unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_likelihood_gives_unit_marginal() {
        let model = FaultModel::unlabeled(vec![0.2, 0.7]).unwrap();
        let lik = OutcomeLikelihood::from_fn(2, OutcomeSpace::from_labels(["ok", "bad"]).unwrap(), |_| vec![0.0, 1.0])
            .unwrap();
        assert!((outcome_marginal(&model, &lik, "bad").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(outcome_marginal(&model, &lik, "ok").unwrap(), 0.0);
    }

    #[test]
    fn single_component_takes_all_blame() {
        let model = FaultModel::unlabeled(vec![0.4]).unwrap();
        let lik = OutcomeLikelihood::exactly_k_faults(1, OutcomeSpace::from_labels(["ok", "bad"]).unwrap()).unwrap();
        let b = BlameFunction::ProportionalShare;
        assert_eq!(expected_blame(&model, &lik, &b, 0, "bad").unwrap(), 1.0);
        assert_eq!(responsibility_proportions(&model, &lik, &b, "bad").unwrap(), vec![100.0]);
    }

    #[test]
    fn conditioning_on_null_outcome_is_an_error() {
        let model = FaultModel::unlabeled(vec![0.0, 0.0]).unwrap();
        let lik = OutcomeLikelihood::exactly_k_faults(2, OutcomeSpace::from_labels(["a", "b", "c"]).unwrap()).unwrap();
        let err = expected_blame(&model, &lik, &BlameFunction::ProportionalShare, 0, "b").unwrap_err();
        assert_eq!(err, RiskError::NullConditioning("b".into()));
        assert!(centralized_cost(&model, &lik, &BlameFunction::ProportionalShare, "c").is_err());
    }

    #[test]
    fn no_fault_outcome_has_degenerate_proportions() {
        let (model, lik) = example();
        let err = responsibility_proportions(&model, &lik, &BlameFunction::ProportionalShare, "s1").unwrap_err();
        assert!(matches!(err, RiskError::DegenerateProportions(_)));
    }

    #[test]
    fn symmetric_components_split_evenly() {
        let model = FaultModel::unlabeled(vec![0.2, 0.2]).unwrap();
        let lik =
            OutcomeLikelihood::exactly_k_faults(2, OutcomeSpace::from_labels(["s1", "s2", "s3"]).unwrap()).unwrap();
        let pct = responsibility_proportions(&model, &lik, &BlameFunction::ProportionalShare, "s2").unwrap();
        assert!((pct[0] - 50.0).abs() < 1e-12 && (pct[1] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn custom_blame_scales_linearly() {
        let (model, lik) = example();
        let base = CustomBlame::from_proportional(3, 4).unwrap();
        let b1 = BlameFunction::Custom(base.clone());
        let b3 = BlameFunction::Custom(base.scaled(3.0));
        let t1 = centralized_cost(&model, &lik, &b1, "s3").unwrap();
        let t3 = centralized_cost(&model, &lik, &b3, "s3").unwrap();
        assert!((t3 - 3.0 * t1).abs() < 1e-12);
        let p1 = responsibility_proportions(&model, &lik, &b1, "s3").unwrap();
        let p3 = responsibility_proportions(&model, &lik, &b3, "s3").unwrap();
        for (a, b) in p1.iter().zip(&p3) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn likelihood_validation() {
        let outcomes = OutcomeSpace::from_labels(["a", "b"]).unwrap();
        assert!(OutcomeLikelihood::from_rows(1, outcomes.clone(), vec![]).is_err());
        let bad_sum = vec![
            (FaultConfig::parse_bits("0").unwrap(), vec![0.5, 0.4]),
            (FaultConfig::parse_bits("1").unwrap(), vec![0.0, 1.0]),
        ];
        assert!(OutcomeLikelihood::from_rows(1, outcomes.clone(), bad_sum).is_err());
        let dup = vec![
            (FaultConfig::parse_bits("0").unwrap(), vec![1.0, 0.0]),
            (FaultConfig::parse_bits("0").unwrap(), vec![1.0, 0.0]),
        ];
        assert!(OutcomeLikelihood::from_rows(1, outcomes.clone(), dup).is_err());
        assert!(OutcomeLikelihood::exactly_k_faults(2, outcomes).is_err());
        assert!(OutcomeSpace::from_labels(["a", "a"]).is_err());
    }

    #[test]
    fn report_flags_absent_outcomes_and_round_trips() {
        let model = FaultModel::unlabeled(vec![0.3, 0.0]).unwrap();
        let lik =
            OutcomeLikelihood::exactly_k_faults(2, OutcomeSpace::from_labels(["s1", "s2", "s3"]).unwrap()).unwrap();
        let report = build_risk_report(&model, &lik, &BlameFunction::ProportionalShare).unwrap();
        let s3 = report.outcome("s3").unwrap();
        assert!(!s3.present && s3.expected_blame.is_none());
        assert!((report.marginal_sum() - 1.0).abs() < 1e-9);
        let back = RiskReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn report_matches_per_element_operations() {
        let (model, lik) = example();
        let blame = BlameFunction::ProportionalShare;
        let report = build_risk_report(&model, &lik, &blame).unwrap();
        for o in report.outcomes.iter().filter(|o| o.present) {
            let blames = o.expected_blame.as_ref().unwrap();
            for (i, &b) in blames.iter().enumerate() {
                let direct = expected_blame(&model, &lik, &blame, i, &o.outcome).unwrap();
                assert!((b - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn twenty_components_enumerate() {
        let model = FaultModel::unlabeled(vec![0.01; 20]).unwrap();
        let labels: Vec<String> = (0..=20).map(|k| format!("k{k}")).collect();
        let outcomes = OutcomeSpace::from_labels(labels.iter().take(16).cloned());
        // 21 outcomes exceed the dense bound.
        assert!(OutcomeSpace::from_labels(labels).is_err());
        assert!(outcomes.is_ok());
        assert_eq!(model.config_probabilities().len(), 1 << 20);
    }
}
