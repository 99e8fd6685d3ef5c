//! Aggregating knockoff realisations into one FDR-controlled support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoff::{CovMethod, KnockoffRealisation, KnockoffSampler, KnockoffSettings, SMatrixMethod, StatisticKind};
use crate::linalg;
use crate::par;
use crate::regress;
use crate::seed;
use crate::stats;
use crate::weaklib::CandidateLibrary;

/// Selected candidate indices with the level and estimator that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    /// Sorted ascending.
    pub indices: Vec<usize>,
    pub target_fdr: f64,
    pub estimator: Option<CovMethod>,
    /// Cross-validated EBIC used to choose between estimators.
    pub score: f64,
}

impl SupportSet {
    fn plain(indices: Vec<usize>, q: f64) -> Self {
        SupportSet { indices, target_fdr: q, estimator: None, score: f64::NAN }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Size-constrained e-BH: reject the `ĵ*` largest e-values, where
/// `ĵ* = max{j ≤ s_max : e_(j) ≥ p/(q·j)}`. Ties in `e` are ordered by
/// `w_bar` descending, then by index.
pub fn ebh_select(e_avg: &[f64], w_bar: Option<&[f64]>, q: f64, s_max: usize) -> SupportSet {
    let p = e_avg.len();
    let order = ebh_order(e_avg, w_bar);
    let limit = s_max.min(p);
    let count = (1..=limit).rev().find(|&j| e_avg[order[j - 1]] >= p as f64 / (q * j as f64)).unwrap_or(0);
    let mut indices = order[..count].to_vec();
    indices.sort_unstable();
    SupportSet::plain(indices, q)
}

fn ebh_order(e: &[f64], w: Option<&[f64]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.sort_by(|&a, &b| {
        e[b].total_cmp(&e[a])
            .then_with(|| match w {
                Some(w) => w[b].total_cmp(&w[a]),
                None => std::cmp::Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    order
}

/// Mean e-values and mean statistics over realisations thresholded at one
/// common base level.
pub fn aggregate_evalues(realisations: &[&KnockoffRealisation]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = realisations.first().ok_or_else(|| Error::Contract("no realisations to aggregate".into()))?;
    let p = first.evalues.len();
    if let Some(r) = realisations.iter().find(|r| r.base_q != first.base_q) {
        return Err(Error::Contract(format!("mixed base levels {} and {}", first.base_q, r.base_q)));
    }
    if realisations.iter().any(|r| r.evalues.len() != p || r.statistic.len() != p) {
        return Err(Error::Contract("realisations differ in length".into()));
    }
    let k = realisations.len() as f64;
    let mut e = vec![0.0; p];
    let mut w = vec![0.0; p];
    for r in realisations {
        for j in 0..p {
            e[j] += r.evalues[j] / k;
            w[j] += r.statistic[j] / k;
        }
    }
    Ok((e, w))
}

/// Knockoff p-values `(1 + #{W ≤ −|W_j|})/p` for `W_j > 0`, else 1.
pub fn knockoff_pvalues(w: &[f64]) -> Vec<f64> {
    let p = w.len() as f64;
    w.iter()
        .map(|&wj| {
            if wj > 0.0 {
                let neg = w.iter().filter(|&&v| v <= -wj).count() as f64;
                ((1.0 + neg) / p).min(1.0)
            } else {
                1.0
            }
        })
        .collect()
}

/// Quantile aggregation of per-realisation p-values (`min(1, Q_γ/γ)`)
/// followed by Benjamini–Hochberg at level `q`.
pub fn bhq_select(pvalues: &[Vec<f64>], gamma: f64, q: f64) -> Result<SupportSet> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("quantile level γ = {gamma} must lie in (0, 1)")));
    }
    let first = pvalues.first().ok_or_else(|| Error::Config("no p-value rows".into()))?;
    let p = first.len();
    if pvalues.iter().any(|row| row.len() != p) {
        return Err(Error::Config("p-value rows differ in length".into()));
    }
    let agg: Vec<f64> = (0..p)
        .map(|j| {
            if pvalues.len() == 1 {
                return pvalues[0][j];
            }
            let col: Vec<f64> = pvalues.iter().map(|row| row[j]).collect();
            (stats::quantile(&col, gamma) / gamma).min(1.0)
        })
        .collect();
    Ok(SupportSet::plain(benjamini_hochberg(&agg, q), q))
}

/// BH step-up: the `k` smallest p-values where `k = max{k : p_(k) ≤ qk/m}`.
pub fn benjamini_hochberg(pvalues: &[f64], q: f64) -> Vec<usize> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let count = (1..=m).rev().find(|&k| pvalues[order[k - 1]] <= q * k as f64 / m as f64).unwrap_or(0);
    let mut sel = order[..count].to_vec();
    sel.sort_unstable();
    sel
}

/// Replace a support larger than `s_max` by its best size-`s_max` subset
/// (minimum RSS summed over responses). Returns the support and whether it
/// changed size.
pub fn truncate_support(
    x: &DMatrix<f64>,
    responses: &[DVector<f64>],
    support: &[usize],
    s_max: usize,
    ridge_penalty: f64,
) -> Result<(Vec<usize>, bool)> {
    if support.len() <= s_max {
        return Ok((support.to_vec(), false));
    }
    let xs = linalg::columns(x, support);
    let fits = regress::exhaustive_best_subset_multi(&xs, responses, s_max, ridge_penalty)?;
    let mut kept: Vec<usize> = fits[0].support.iter().map(|&k| support[k]).collect();
    kept.sort_unstable();
    Ok((kept, true))
}

const SCORE_FOLDS: usize = 3;

/// 3-fold cross-validated EBIC (γ = 1, pool = all columns) of the least
/// squares refit on `support`, summed over folds and responses.
pub fn cv_ebic(x: &DMatrix<f64>, responses: &[DVector<f64>], support: &[usize], seed: u64) -> Result<f64> {
    let (n, p) = x.shape();
    if support.is_empty() {
        return Err(Error::Config("cannot score an empty support".into()));
    }
    let folds = seed::fold_assignment(n, SCORE_FOLDS, seed);
    let xs = linalg::columns(x, support);
    let mut total = 0.0;
    for f in 0..SCORE_FOLDS {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let (xtr, xte) = (linalg::rows(&xs, &train), linalg::rows(&xs, &test));
        for y in responses {
            let beta = regress::fit_ols(&xtr, &linalg::gather(y, &train))?;
            let rss = (linalg::gather(y, &test) - &xte * beta).norm_squared().max(f64::MIN_POSITIVE);
            total += regress::ebic(rss, test.len(), support.len(), p, 1.0);
        }
    }
    Ok(total)
}

/// Settings of the adaptive screening loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenConfig {
    pub q0: f64,
    pub q_max: f64,
    pub dq: f64,
    pub s_min: usize,
    /// Support cap; screened from the data when absent.
    pub s_max: Option<usize>,
    /// Number of knockoff realisations.
    pub k: usize,
    pub seed: u64,
    pub statistic: StatisticKind,
    pub smatrix: SMatrixMethod,
    pub estimators: Vec<CovMethod>,
    pub ridge_penalty: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            q0: 0.5,
            q_max: 1.0,
            dq: 0.01,
            s_min: 2,
            s_max: None,
            k: 100,
            seed: 0,
            statistic: StatisticKind::ShapDs,
            smatrix: SMatrixMethod::Equi,
            estimators: vec![CovMethod::GraphicalLassoCv, CovMethod::LedoitWolf],
            ridge_penalty: 0.0,
        }
    }
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.q0 > 0.0 && self.q0 <= self.q_max) {
            return bad(format!("need 0 < q0 ≤ q_max, got q0 = {}, q_max = {}", self.q0, self.q_max));
        }
        if !(self.dq > 0.0) {
            return bad(format!("dq must be positive, got {}", self.dq));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.s_min == 0 || self.s_max.is_some_and(|s| s < self.s_min) {
            return bad(format!("need 1 ≤ s_min ≤ s_max, got {} and {:?}", self.s_min, self.s_max));
        }
        if self.estimators.is_empty() {
            return bad("at least one covariance estimator is required".into());
        }
        Ok(())
    }
}

/// Per-estimator record in the screening report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub estimator: CovMethod,
    /// `selected`, `exhausted` or an error message.
    pub status: String,
    pub tuned_q: Option<f64>,
    pub support: Vec<usize>,
    pub truncated: bool,
    pub score: Option<f64>,
    /// Mean e-values, one vector per response.
    pub e_avg: Vec<Vec<f64>>,
    /// Mean statistics, one vector per response.
    pub w_bar: Vec<Vec<f64>>,
    /// Base-level thresholds, `[response][realisation]`; `null` for +∞.
    pub thresholds: Vec<Vec<Option<f64>>>,
}

/// Screening report written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub estimator: CovMethod,
    pub tuned_q: f64,
    pub s_max: usize,
    pub support: Vec<usize>,
    pub support_labels: Vec<String>,
    pub runs: Vec<EstimatorRun>,
}

#[derive(Debug, Clone)]
pub struct ScreenOutcome {
    pub support: SupportSet,
    pub tuned_q: f64,
    pub report: ScreenReport,
}

/// Cap used when the configuration leaves `s_max` open: the largest
/// screened size over responses.
pub fn default_smax(library: &CandidateLibrary, seed_: u64) -> Result<usize> {
    library
        .responses
        .iter()
        .enumerate()
        .map(|(r, y)| regress::screen_smax(&library.design, y, seed::derive(seed_, "smax", r as u64)))
        .try_fold(0, |acc, s| s.map(|s| acc.max(s)))
}

/// Adaptive knockoff screen: per covariance estimator, K shared draws,
/// decoupled e-values at `q0`, a level sweep until `s_min` terms are found,
/// truncation to `s_max`, and a cross-validated EBIC to pick the estimator.
pub fn adaptive_filter(library: &CandidateLibrary, config: &ScreenConfig) -> Result<ScreenOutcome> {
    config.validate()?;
    let x = &library.design;
    let ys = &library.responses;
    let s_max = match config.s_max {
        Some(s) => s,
        None => default_smax(library, config.seed)?.max(config.s_min),
    }
    .min(library.n_terms());
    let settings = KnockoffSettings {
        smatrix: config.smatrix,
        statistic: config.statistic,
        base_q: config.q0,
        offset: 1,
        s_max,
        ridge_penalty: config.ridge_penalty,
    };

    let mut runs = Vec::with_capacity(config.estimators.len());
    let mut first_error = None;
    for &method in &config.estimators {
        match screen_with(x, ys, method, &settings, config) {
            Ok(run) => runs.push(run),
            Err(e) => {
                runs.push(EstimatorRun {
                    estimator: method,
                    status: format!("error: {e}"),
                    tuned_q: None,
                    support: Vec::new(),
                    truncated: false,
                    score: None,
                    e_avg: Vec::new(),
                    w_bar: Vec::new(),
                    thresholds: Vec::new(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let best = runs.iter().filter(|r| r.score.is_some()).min_by(|a, b| a.score.unwrap().total_cmp(&b.score.unwrap()));
    let Some(best) = best else {
        if runs.iter().all(|r| r.status.starts_with("error")) {
            return Err(first_error.expect("every run failed"));
        }
        return Err(Error::EmptyDiscovery(format!("no estimator reached {} terms by q = {}", config.s_min, config.q_max)));
    };
    let tuned_q = best.tuned_q.expect("scored runs are tuned");
    let support =
        SupportSet { indices: best.support.clone(), target_fdr: tuned_q, estimator: Some(best.estimator), score: best.score.unwrap() };
    let report = ScreenReport {
        estimator: best.estimator,
        tuned_q,
        s_max,
        support: best.support.clone(),
        support_labels: library.labels(&best.support),
        runs: runs.clone(),
    };
    Ok(ScreenOutcome { support, tuned_q, report })
}

fn screen_with(
    x: &DMatrix<f64>,
    ys: &[DVector<f64>],
    method: CovMethod,
    settings: &KnockoffSettings,
    config: &ScreenConfig,
) -> Result<EstimatorRun> {
    let sampler = KnockoffSampler::new(x, method, settings.smatrix, seed::derive(config.seed, "covariance", 0))?;
    let draws: Vec<Result<Vec<KnockoffRealisation>>> =
        par::map_range(config.k, |k| sampler.realise(x, ys, settings, seed::derive(config.seed, "realisation", k as u64)));
    let draws: Vec<Vec<KnockoffRealisation>> = draws.into_iter().collect::<Result<_>>()?;

    let mut e_avg = Vec::with_capacity(ys.len());
    let mut w_bar = Vec::with_capacity(ys.len());
    let mut thresholds = Vec::with_capacity(ys.len());
    for r in 0..ys.len() {
        let per_response: Vec<&KnockoffRealisation> = draws.iter().map(|d| &d[r]).collect();
        let (e, w) = aggregate_evalues(&per_response)?;
        thresholds.push(per_response.iter().map(|k| k.threshold.is_finite().then_some(k.threshold)).collect());
        e_avg.push(e);
        w_bar.push(w);
    }

    let mut run = EstimatorRun {
        estimator: method,
        status: "exhausted".into(),
        tuned_q: None,
        support: Vec::new(),
        truncated: false,
        score: None,
        e_avg,
        w_bar,
        thresholds,
    };
    let Some((q, union)) = sweep(&run.e_avg, &run.w_bar, config, settings.s_max) else {
        return Ok(run);
    };
    let (support, truncated) = truncate_support(x, ys, &union, settings.s_max, regress::DEFAULT_RIDGE)?;
    run.score = Some(cv_ebic(x, ys, &support, seed::derive(config.seed, "score", 0))?);
    run.status = "selected".into();
    run.tuned_q = Some(q);
    run.support = support;
    run.truncated = truncated;
    Ok(run)
}

/// Raise the selection level from `q0` in steps of `dq` until the union of
/// per-response e-BH supports reaches `s_min`.
fn sweep(e_avg: &[Vec<f64>], w_bar: &[Vec<f64>], config: &ScreenConfig, s_max: usize) -> Option<(f64, Vec<usize>)> {
    let steps = ((config.q_max - config.q0) / config.dq + 1e-9).floor() as usize;
    (0..=steps).find_map(|i| {
        let q = config.q0 + i as f64 * config.dq;
        let mut union: Vec<usize> = e_avg.iter().zip(w_bar).flat_map(|(e, w)| ebh_select(e, Some(w), q, s_max).indices).collect();
        union.sort_unstable();
        union.dedup();
        (union.len() >= config.s_min).then_some((q, union))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn realisation(e: Vec<f64>, base_q: f64) -> KnockoffRealisation {
        let p = e.len();
        KnockoffRealisation {
            knockoff_design: Arc::new(DMatrix::zeros(1, p)),
            s_diag: Arc::new(vec![0.0; p]),
            statistic: vec![0.0; p],
            threshold: 1.0,
            evalues: e,
            base_q,
            seed: 0,
        }
    }

    #[test]
    fn ebh_hand_examples() {
        let e = [4.0, 4.0, 0.0, 0.0];
        assert_eq!(ebh_select(&e, None, 0.5, 4).indices, vec![0, 1]);
        assert!(ebh_select(&[0.0; 4], None, 0.5, 4).is_empty());
        // No self-consistent set of size ≤ 1: empty, not a truncated top-1.
        assert!(ebh_select(&e, None, 0.5, 1).is_empty());
    }

    #[test]
    fn ebh_breaks_ties_by_statistic_then_index() {
        let e = [8.0, 8.0, 8.0, 0.0];
        // p/(q·1) = 4 ≤ 8 at j = 1, and j = 2 needs 2 ≤ 8: with s_max = 2 two of three tied.
        let w = [0.1, 0.9, 0.5, 0.0];
        assert_eq!(ebh_select(&e, Some(&w), 1.0, 2).indices, vec![1, 2]);
        assert_eq!(ebh_select(&e, None, 1.0, 2).indices, vec![0, 1]);
    }

    #[test]
    fn aggregation_averages_and_checks_base_level() {
        let a = realisation(vec![4.0, 0.0], 0.5);
        let b = realisation(vec![0.0, 4.0], 0.5);
        assert_eq!(aggregate_evalues(&[&a, &b]).unwrap().0, vec![2.0, 2.0]);
        assert_eq!(aggregate_evalues(&[&a]).unwrap().0, vec![4.0, 0.0]);
        let c = realisation(vec![0.0, 4.0], 0.3);
        assert!(matches!(aggregate_evalues(&[&a, &c]), Err(Error::Contract(_))));
    }

    #[test]
    fn pvalue_map() {
        let w = [3.0, -1.0, 2.0, -3.0];
        assert_eq!(knockoff_pvalues(&w), vec![0.5, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn bhq_single_row_is_bh() {
        let p = vec![0.001, 0.5, 0.02, 0.04, 0.9];
        // BH at 0.1 with m = 5: thresholds 0.02, 0.04, 0.06 → first three sorted p-values pass.
        let s = bhq_select(std::slice::from_ref(&p), 0.5, 0.1).unwrap();
        assert_eq!(s.indices, vec![0, 2, 3]);
        assert_eq!(s.indices, benjamini_hochberg(&p, 0.1));
        assert!(bhq_select(&[vec![1.0; 5], vec![1.0; 5]], 0.5, 0.2).unwrap().is_empty());
    }

    #[test]
    fn bhq_quantile_aggregation() {
        let rows = vec![vec![0.01, 0.8], vec![0.02, 0.9], vec![0.03, 0.7]];
        // Median over rows / 0.5: (0.04, 1.0).
        let s = bhq_select(&rows, 0.5, 0.1).unwrap();
        assert_eq!(s.indices, vec![0]);
    }

    #[test]
    fn truncation_keeps_true_terms() {
        let x = crate::regress::tests::gaussian_design(200, 8, 4);
        let y = x.column(1) * 3.0 + x.column(4) * -2.0 + x.column(6) * 2.5;
        let (s, changed) = truncate_support(&x, std::slice::from_ref(&y), &[0, 1, 2, 3, 4, 5, 6, 7], 3, 0.0).unwrap();
        assert!(changed);
        assert_eq!(s, vec![1, 4, 6]);
        let (same, changed) = truncate_support(&x, &[y], &[1, 4, 6], 3, 0.0).unwrap();
        assert!(!changed);
        assert_eq!(same, vec![1, 4, 6]);
    }

    #[test]
    fn sweep_exits_immediately_when_q0_suffices() {
        let config = ScreenConfig { s_min: 2, ..ScreenConfig::default() };
        let e = vec![vec![4.0, 4.0, 0.0, 0.0]];
        let w = vec![vec![1.0, 1.0, 0.0, 0.0]];
        let (q, s) = sweep(&e, &w, &config, 4).unwrap();
        assert_eq!(q, 0.5);
        assert_eq!(s, vec![0, 1]);
    }

    #[test]
    fn sweep_relaxes_until_enough_terms() {
        // Needs q ≥ 4/(2·3) to take three e-values of 2 with p = 4 → only at q ≥ 0.667.
        let config = ScreenConfig { s_min: 3, ..ScreenConfig::default() };
        let e = vec![vec![2.0, 2.0, 2.0, 0.0]];
        let w = vec![vec![0.0; 4]];
        let (q, s) = sweep(&e, &w, &config, 4).unwrap();
        assert!((q - 0.67).abs() < 1e-9, "{q}");
        assert_eq!(s, vec![0, 1, 2]);
        let tight = ScreenConfig { s_min: 4, ..ScreenConfig::default() };
        assert!(sweep(&e, &w, &tight, 4).is_none());
    }

    fn planted_library(n: usize, p: usize, noise: f64, seed_: u64) -> CandidateLibrary {
        use rand_distr::{Distribution, StandardNormal};
        let x = crate::regress::tests::gaussian_design(n, p, seed_);
        let mut rng = seed::rng(seed_ + 1);
        let y = DVector::from_fn(n, |i, _| {
            2.0 * x[(i, 0)] - 1.5 * x[(i, 3)]
                + x[(i, 5)]
                + noise * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
        });
        let labels = (0..p).map(|j| format!("c{j}")).collect();
        CandidateLibrary::from_design(x, vec![y], labels).unwrap()
    }

    #[test]
    fn adaptive_filter_finds_planted_terms() {
        let lib = planted_library(300, 12, 0.3, 21);
        let config = ScreenConfig { k: 10, s_max: Some(6), seed: 5, ..ScreenConfig::default() };
        let out = adaptive_filter(&lib, &config).unwrap();
        for j in [0, 3, 5] {
            assert!(out.support.indices.contains(&j), "{:?}", out.support.indices);
        }
        assert!(out.support.len() <= 6);
        assert!(out.tuned_q >= 0.5);
        assert_eq!(out.report.runs.len(), 2);
        assert_eq!(out.report.support_labels.len(), out.support.len());
        // Deterministic for a fixed seed.
        let again = adaptive_filter(&lib, &config).unwrap();
        assert_eq!(again.report, out.report);
    }

    #[test]
    fn unreachable_minimum_is_empty_discovery() {
        let lib = planted_library(120, 6, 0.3, 3);
        let config = ScreenConfig { k: 3, s_min: 6, s_max: Some(6), q_max: 0.52, ..ScreenConfig::default() };
        let err = adaptive_filter(&lib, &config).unwrap_err();
        assert!(matches!(err, Error::EmptyDiscovery(_)), "{err}");
    }

    proptest! {
        #[test]
        fn ebh_is_monotone_in_q(e in proptest::collection::vec(0.0f64..20.0, 1..25), s_max in 1usize..25) {
            let mut prev: Vec<usize> = Vec::new();
            for i in 1..=20 {
                let q = i as f64 / 20.0;
                let s = ebh_select(&e, None, q, s_max).indices;
                prop_assert!(prev.iter().all(|j| s.contains(j)));
                prop_assert!(s.len() <= s_max);
                // Count-constrained self-consistency.
                for &j in &s {
                    prop_assert!(e[j] >= e.len() as f64 / (q * s.len() as f64) * (1.0 - 1e-12));
                }
                prev = s;
            }
        }
    }
}
