//! Forward-sampling Monte Carlo oracle for the exact blame engine.
//!
//! Draws `F` component by component, then `S | F` from the likelihood row,
//! then evaluates the blame function. It shares no code with the exact
//! enumeration path and exists to cross-check it in tests.

use super::{BlameFunction, FaultModel, OutcomeLikelihood};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SampledBlame {
    pub samples: u64,
    pub outcome_counts: Vec<u64>,
    /// Sample mean of `blame_i` among draws with `S = s`, indexed `[s][i]`.
    pub mean: Vec<Vec<f64>>,
    /// Standard error of `mean`, indexed `[s][i]`.
    pub std_error: Vec<Vec<f64>>,
}

impl SampledBlame {
    pub fn marginal(&self, s: usize) -> f64 {
        self.outcome_counts[s] as f64 / self.samples as f64
    }

    pub fn marginal_std_error(&self, s: usize) -> f64 {
        let p = self.marginal(s);
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }
}

pub fn monte_carlo_blame<R: Rng + ?Sized>(
    model: &FaultModel,
    lik: &OutcomeLikelihood,
    blame: &BlameFunction,
    samples: u64,
    rng: &mut R,
) -> SampledBlame {
    let n = model.n();
    let m = lik.outcomes().len();
    let mut counts = vec![0u64; m];
    let mut sum = vec![vec![0.0; n]; m];
    let mut sum_sq = vec![vec![0.0; n]; m];
    for _ in 0..samples {
        let mut f_index = 0usize;
        for &p in model.probabilities() {
            let bit = rng.random::<f64>() < p;
            f_index = (f_index << 1) | usize::from(bit);
        }
        let u: f64 = rng.random();
        let row = lik.row(f_index);
        let mut acc = 0.0;
        let mut s = m - 1;
        for (k, &w) in row.iter().enumerate() {
            acc += w;
            if u < acc {
                s = k;
                break;
            }
        }
        // Guard against rounding in the cumulative sum landing on a zero cell.
        while row[s] == 0.0 && s > 0 {
            s -= 1;
        }
        counts[s] += 1;
        for i in 0..n {
            let b = blame.value(n, f_index, s, i);
            sum[s][i] += b;
            sum_sq[s][i] += b * b;
        }
    }
    let mut mean = vec![vec![f64::NAN; n]; m];
    let mut std_error = vec![vec![f64::NAN; n]; m];
    for s in 0..m {
        let c = counts[s] as f64;
        if counts[s] == 0 {
            continue;
        }
        for i in 0..n {
            let mu = sum[s][i] / c;
            let var = if counts[s] > 1 { ((sum_sq[s][i] - c * mu * mu) / (c - 1.0)).max(0.0) } else { 0.0 };
            mean[s][i] = mu;
            std_error[s][i] = (var / c).sqrt();
        }
    }
    SampledBlame { samples, outcome_counts: counts, mean, std_error }
}
