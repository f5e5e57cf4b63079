//! Empirical outcome likelihoods from repeated episodes.

use super::episode::{run_episode_with, FaultAssignment};
use super::outcome::OutcomeLabel;
use super::scenario::ScenarioConfig;
use super::trace::TraceDetail;
use super::SimError;
use crate::risk::{FaultConfig, OutcomeLikelihood, RiskError};
use serde::Serialize;

/// Seed of episode `k` under base seed `base`. Every fault configuration
/// reuses the same seeds, so configurations are compared on paired draws.
pub fn episode_seed(base: u64, k: u64) -> u64 {
    let mut z = base ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Wilson score interval half-width for `count` successes out of `n`.
pub fn wilson_half_width(count: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let n = n as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Outcome counts per fault configuration, indexed like `FaultConfig`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalLikelihood {
    pub counts: Vec<[u64; 4]>,
}

impl Default for EmpiricalLikelihood {
    fn default() -> Self {
        Self { counts: vec![[0; 4]; 8] }
    }
}

impl EmpiricalLikelihood {
    pub fn record(&mut self, f: FaultAssignment, s: OutcomeLabel) {
        self.counts[f.index()][s.index()] += 1;
    }

    /// Combines two partial tallies; associative and commutative.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn episodes(&self, f: usize) -> u64 {
        self.counts[f].iter().sum()
    }

    pub fn probability(&self, f: usize, s: usize) -> f64 {
        self.counts[f][s] as f64 / self.episodes(f) as f64
    }

    pub fn half_width(&self, f: usize, s: usize, z: f64) -> f64 {
        wilson_half_width(self.counts[f][s], self.episodes(f), z)
    }

    pub fn to_likelihood(&self) -> Result<OutcomeLikelihood, RiskError> {
        let rows = (0..8).map(|f| (FaultConfig::from_index(3, f), (0..4).map(|s| self.probability(f, s)).collect()));
        OutcomeLikelihood::from_rows(3, OutcomeLabel::space(), rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub config: String,
    pub episode: u64,
    pub seed: u64,
    pub outcome: &'static str,
    pub collisions: usize,
    pub min_ttc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub episodes_per_config: u64,
    pub likelihood: EmpiricalLikelihood,
    /// One row per episode, ordered by configuration then episode.
    pub rows: Vec<EpisodeRow>,
}

fn run_block(
    cfg: &ScenarioConfig,
    seed: u64,
    jobs: &[(usize, u64)],
) -> Result<(EmpiricalLikelihood, Vec<EpisodeRow>), SimError> {
    let mut tally = EmpiricalLikelihood::default();
    let mut rows = Vec::with_capacity(jobs.len());
    for &(f, k) in jobs {
        let fa = FaultAssignment::from_index(f);
        let s = episode_seed(seed, k);
        let tr = run_episode_with(cfg, fa, s, TraceDetail::Outcome)?;
        tally.record(fa, tr.outcome);
        rows.push(EpisodeRow {
            config: fa.to_string(),
            episode: k,
            seed: s,
            outcome: tr.outcome.as_str(),
            collisions: tr.collisions.len(),
            min_ttc: tr.min_ttc,
        });
    }
    Ok((tally, rows))
}

/// Runs `episodes` episodes for each of the eight fault configurations and
/// tallies outcomes. Work is split across the available cores; the result is
/// independent of the split.
pub fn estimate_outcome_likelihood(cfg: &ScenarioConfig, episodes: u64, seed: u64) -> Result<Estimate, SimError> {
    if episodes == 0 {
        return Err(SimError::Config("episodes per configuration must be at least 1".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..8).flat_map(|f| (0..episodes).map(move |k| (f, k))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let chunk = jobs.len().div_ceil(workers);
    let parts: Vec<Result<_, SimError>> = if workers == 1 {
        vec![run_block(cfg, seed, &jobs)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs.chunks(chunk).map(|c| scope.spawn(move || run_block(cfg, seed, c))).collect();
            handles.into_iter().map(|h| h.join().expect("episode worker panicked")).collect()
        })
    };
    let mut likelihood = EmpiricalLikelihood::default();
    let mut rows = Vec::with_capacity(jobs.len());
    for part in parts {
        let (t, r) = part?;
        likelihood.merge(&t);
        rows.extend(r);
    }
    Ok(Estimate { episodes_per_config: episodes, likelihood, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_hand_computation() {
        // p = 0.5, n = 100, z = 1.96.
        let h = wilson_half_width(50, 100, 1.96);
        let expect = 1.96 / (1.0 + 1.96f64.powi(2) / 100.0) * (0.0025 + 1.96f64.powi(2) / 40000.0).sqrt();
        assert!((h - expect).abs() < 1e-15);
        assert!(h > 0.09 && h < 0.1);
    }

    #[test]
    fn merge_is_order_independent() {
        let mut a = EmpiricalLikelihood::default();
        let mut b = EmpiricalLikelihood::default();
        a.record(FaultAssignment::from_index(3), OutcomeLabel::S2);
        b.record(FaultAssignment::from_index(0), OutcomeLabel::S1);
        let (mut ab, mut ba) = (a.clone(), b.clone());
        ab.merge(&b);
        ba.merge(&a);
        assert_eq!(ab, ba);
    }

    #[test]
    fn seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|k| episode_seed(7, k)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
