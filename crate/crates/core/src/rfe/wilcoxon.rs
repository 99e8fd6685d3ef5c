//! One-sided Wilcoxon signed-rank test.

use crate::error::{Error, Result};
use crate::stats;

/// Smallest accepted sample (before dropping zeros).
pub const MIN_SAMPLE: usize = 5;
/// Largest non-zero sample evaluated exactly.
const EXACT_LIMIT: usize = 25;

/// p-value for the alternative "differences tend to be negative": the
/// probability of a positive-rank sum at most the observed one under random
/// signs. Zeros are dropped; ties get average ranks.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<f64> {
    if diffs.len() < MIN_SAMPLE {
        return Err(Error::Config(format!("signed-rank test needs at least {MIN_SAMPLE} differences, got {}", diffs.len())));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = stats::average_ranks(&abs);
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = nonzero.len();
    if n <= EXACT_LIMIT {
        return Ok(signed_rank_exact_cdf(&ranks, w_plus));
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = tie_sizes(&abs).iter().map(|&t| t * t * t - t).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    Ok(stats::normal_cdf((w_plus - mean) / var.sqrt()))
}

fn tie_sizes(x: &[f64]) -> Vec<f64> {
    let s = stats::sorted(x);
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let j = s[i..].iter().take_while(|&&v| v == s[i]).count();
        if j > 1 {
            out.push(j as f64);
        }
        i += j;
    }
    out
}

/// `P(Σ ranks with positive sign ≤ w)` under independent fair signs, by
/// dynamic programming over doubled (integer) ranks.
pub fn signed_rank_exact_cdf(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0_f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * w + 1e-9).floor() as usize;
    let hits: f64 = counts.iter().take(limit.min(total) + 1).sum();
    hits / 2f64.powi(ranks.len() as i32)
}
