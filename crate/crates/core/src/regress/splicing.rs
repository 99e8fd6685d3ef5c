//! ℓ0-constrained best-subset regression by splicing.
//!
//! Works on sufficient statistics only, so cross-validation costs one Gram
//! per fold regardless of the number of rows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{ridge_from_gram, Moments, SparseFit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::stats;

const MAX_SPLICES: usize = 200;
const CV_FOLDS: usize = 3;

/// Objective values visited by one splicing run.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicingTrace {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub losses: Vec<f64>,
}

struct Problem<'a> {
    g: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    yy: f64,
    n: f64,
    ridge: f64,
}

impl Problem<'_> {
    fn solve(&self, active: &[usize]) -> Result<(DVector<f64>, f64)> {
        let gs = linalg::principal(self.g, active);
        let cs = linalg::gather(self.c, active);
        let beta = ridge_from_gram(&gs, &cs, self.n, self.ridge)?;
        let rss = (self.yy - 2.0 * beta.dot(&cs) + (&gs * &beta).dot(&beta)).max(0.0);
        Ok((beta.clone(), 0.5 * rss / self.n + self.ridge * beta.norm_squared()))
    }

    fn splice(&self, size: usize, eligible: &[usize]) -> Result<SplicingTrace> {
        let score = |j: usize| self.c[j].abs() / self.g[(j, j)].sqrt();
        let mut order = eligible.to_vec();
        order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
        let mut active: Vec<usize> = order[..size].to_vec();
        active.sort_unstable();
        let (mut beta, mut loss) = self.solve(&active)?;
        let mut losses = vec![loss];
        for _ in 0..MAX_SPLICES {
            let inactive: Vec<usize> = eligible.iter().copied().filter(|j| !active.contains(j)).collect();
            if inactive.is_empty() {
                break;
            }
            let fitted: DVector<f64> = DVector::from_iterator(
                self.g.nrows(),
                (0..self.g.nrows()).map(|j| active.iter().zip(beta.iter()).map(|(&a, b)| self.g[(j, a)] * b).sum::<f64>()),
            );
            // Loss increase from dropping each active coordinate.
            let mut sacrifice: Vec<(f64, usize)> =
                active.iter().zip(beta.iter()).map(|(&j, &b)| ((self.g[(j, j)] / (2.0 * self.n) + self.ridge) * b * b, j)).collect();
            sacrifice.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // Loss decrease from adding each inactive coordinate.
            let mut gain: Vec<(f64, usize)> = inactive
                .iter()
                .map(|&j| {
                    let d = (self.c[j] - fitted[j]) / self.n;
                    (self.n * d * d / (2.0 * (self.g[(j, j)] + 2.0 * self.n * self.ridge)), j)
                })
                .collect();
            gain.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut improved = false;
            for k in 1..=size.min(2).min(inactive.len()) {
                let mut trial: Vec<usize> = active
                    .iter()
                    .copied()
                    .filter(|j| !sacrifice[..k].iter().any(|s| s.1 == *j))
                    .chain(gain[..k].iter().map(|g| g.1))
                    .collect();
                trial.sort_unstable();
                let (b, l) = self.solve(&trial)?;
                if l < loss * (1.0 - 1e-12) - 1e-300 {
                    active = trial;
                    beta = b;
                    loss = l;
                    losses.push(loss);
                    improved = true;
                    break;
                }
            }
            if !improved {
                break;
            }
        }
        Ok(SplicingTrace { support: active, coefficients: beta.iter().copied().collect(), losses })
    }
}

/// Indices of columns with positive centred variance.
fn eligible_columns(g: &DMatrix<f64>) -> Vec<usize> {
    let scale = (0..g.nrows()).map(|j| g[(j, j)]).fold(0.0, f64::max);
    (0..g.nrows()).filter(|&j| g[(j, j)] > 1e-12 * scale.max(f64::MIN_POSITIVE)).collect()
}

/// Splicing at a fixed support size on centred data, with its loss trace.
pub fn splice_at_size(x: &DMatrix<f64>, y: &DVector<f64>, size: usize, ridge_penalty: f64) -> Result<SplicingTrace> {
    let (g, c, yy) = Moments::of(x, y).centred();
    let eligible = eligible_columns(&g);
    if size == 0 || size > eligible.len() {
        return Err(Error::Config(format!("size {size} outside 1..={}", eligible.len())));
    }
    Problem { g: &g, c: &c, yy, n: x.nrows() as f64, ridge: ridge_penalty }.splice(size, &eligible)
}

/// Splicing best-subset regression with the default fold seed.
pub fn fit_splicing(x: &DMatrix<f64>, y: &DVector<f64>, s_max: usize, ridge_penalty: f64) -> Result<SparseFit> {
    fit_splicing_with(x, y, s_max, ridge_penalty, 0)
}

/// Splicing best-subset regression: support size chosen in `1..=s_max` by
/// integer golden-section search on 3-fold CV error. Includes an intercept.
pub fn fit_splicing_with(x: &DMatrix<f64>, y: &DVector<f64>, s_max: usize, ridge_penalty: f64, fold_seed: u64) -> Result<SparseFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Config("response length differs from design rows".into()));
    }
    if s_max == 0 || s_max > p {
        return Err(Error::Config(format!("s_max {s_max} outside 1..={p}")));
    }
    if n < 2 * CV_FOLDS {
        return Err(Error::Config(format!("splicing CV needs at least {} rows", 2 * CV_FOLDS)));
    }
    let full = Moments::of(x, y);
    let (g, c, yy) = full.centred();
    let eligible = eligible_columns(&g);
    if eligible.is_empty() {
        return Err(Error::Degenerate("every column is constant".into()));
    }
    let s_max = s_max.min(eligible.len());

    let folds = seed::fold_assignment(n, CV_FOLDS, fold_seed);
    let fold_moments: Vec<(Moments, Moments)> = (0..CV_FOLDS)
        .map(|f| {
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let xt = linalg::rows(x, &test);
            let yt = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
            let tm = Moments::of(&xt, &yt);
            (full.minus(&tm), tm)
        })
        .collect();
    let train_parts: Vec<_> = fold_moments.iter().map(|(tr, _)| (tr.centred(), eligible_columns(&tr.centred().0))).collect();

    // Per size: (pooled CV mean squared error, standard error across folds).
    let mut cache: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut cv = |s: usize| -> Result<(f64, f64)> {
        if let Some(&v) = cache.get(&s) {
            return Ok(v);
        }
        let mut sse = 0.0;
        let mut count = 0.0;
        let mut fold_mse = Vec::with_capacity(CV_FOLDS);
        for ((train, test), ((gt, ct, yyt), elig)) in fold_moments.iter().zip(&train_parts) {
            let size = s.min(elig.len()).max(1);
            let trace = Problem { g: gt, c: ct, yy: *yyt, n: train.n, ridge: ridge_penalty }.splice(size, elig)?;
            let mut beta = DVector::zeros(p);
            for (&j, &b) in trace.support.iter().zip(&trace.coefficients) {
                beta[j] = b;
            }
            let intercept = (train.y - beta.dot(&train.x)) / train.n;
            let e = test.sse(intercept, &beta);
            fold_mse.push(e / test.n);
            sse += e;
            count += test.n;
        }
        let v = (sse / count, stats::sd(&fold_mse) / (CV_FOLDS as f64).sqrt());
        cache.insert(s, v);
        Ok(v)
    };

    let (mut lo, mut hi) = (1usize, s_max);
    while hi - lo > 2 {
        let span = (hi - lo) as f64;
        let mut m1 = lo + (0.381_966 * span).round() as usize;
        let mut m2 = lo + (0.618_034 * span).round() as usize;
        if m1 == m2 {
            m2 += 1;
        }
        m1 = m1.max(lo + 1).min(m2 - 1);
        if cv(m1)?.0 <= cv(m2)?.0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut best = (f64::INFINITY, 0.0, lo);
    for s in lo..=hi {
        let (v, se) = cv(s)?;
        if v < best.0 {
            best = (v, se, s);
        }
    }
    // One-standard-error rule: step down while the smaller size stays within
    // one standard error of the minimum.
    let (mut score, se, mut size) = best;
    while size > 1 {
        let (v, _) = cv(size - 1)?;
        if v > best.0 + se {
            break;
        }
        size -= 1;
        score = v;
    }
    let trace = Problem { g: &g, c: &c, yy, n: n as f64, ridge: ridge_penalty }.splice(size, &eligible)?;
    let beta_full = {
        let mut b = DVector::zeros(p);
        for (&j, &v) in trace.support.iter().zip(&trace.coefficients) {
            b[j] = v;
        }
        b
    };
    let intercept = (full.y - beta_full.dot(&full.x)) / full.n;
    Ok(SparseFit::from_support(p, trace.support, &trace.coefficients, intercept, ridge_penalty, score))
}
