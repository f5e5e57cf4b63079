//! Benchmark fixtures shared by the bench targets.

use iea_core::risk::{FaultModel, OutcomeLikelihood, OutcomeSpace};
use iea_core::sim::ScenarioConfig;
use std::path::Path;

/// A model with `n` components whose outcome is the fault count.
pub fn counting_model(n: usize) -> (FaultModel, OutcomeLikelihood) {
    let p = (0..n).map(|i| 0.05 + 0.4 * i as f64 / n as f64).collect();
    let labels: Vec<String> = (0..=n).map(|k| format!("s{}", k + 1)).collect();
    let lik = OutcomeLikelihood::exactly_k_faults(n, OutcomeSpace::from_labels(labels).unwrap()).unwrap();
    (FaultModel::unlabeled(p).unwrap(), lik)
}

pub fn bundled_scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name);
    ScenarioConfig::load(&path).expect("bundled scenario parses")
}
