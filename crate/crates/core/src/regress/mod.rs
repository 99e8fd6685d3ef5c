//! Regression estimators: ridge/OLS, elastic net, best-subset search,
//! quantile and RIF regression.

mod quantile;
mod splicing;

pub use quantile::{fit_quantile, fit_rif, smoothed_pinball, RifFit};
pub use splicing::{fit_splicing, fit_splicing_with, splice_at_size, SplicingTrace};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::stats;

/// Default ridge penalty for refits.
pub const DEFAULT_RIDGE: f64 = 1e-5;

/// Budget on the number of subsets enumerated by exhaustive search.
pub const SUBSET_BUDGET: u128 = 1_000_000;

/// Sparse regression result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    /// Length-p coefficients, zero off the support.
    pub coefficients: Vec<f64>,
    /// Sorted active indices.
    pub support: Vec<usize>,
    pub intercept: f64,
    pub ridge_penalty: f64,
    /// Cross-validated mean squared error (or RSS for exhaustive fits).
    pub cv_score: f64,
}

impl SparseFit {
    pub(crate) fn from_support(p: usize, support: Vec<usize>, beta: &[f64], intercept: f64, ridge: f64, score: f64) -> Self {
        let mut coefficients = vec![0.0; p];
        let mut kept = Vec::with_capacity(support.len());
        for (&j, &b) in support.iter().zip(beta) {
            if b != 0.0 {
                coefficients[j] = b;
                kept.push(j);
            }
        }
        SparseFit { coefficients, support: kept, intercept, ridge_penalty: ridge, cv_score: score }
    }

    /// Fitted values on `x`, intercept included.
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        (x * beta).add_scalar(self.intercept)
    }
}

/// Minimiser of `½n⁻¹‖y − Xβ‖² + λ‖β‖²` (no intercept).
pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, ridge_penalty: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 || y.len() != n {
        return Err(Error::Config(format!("fit_linear: X is {n}×{p}, y has {}", y.len())));
    }
    if !(ridge_penalty >= 0.0) {
        return Err(Error::Config(format!("ridge penalty {ridge_penalty} must be ≥ 0")));
    }
    if ridge_penalty == 0.0 {
        if n < p {
            return Err(Error::Singular(format!("OLS with {n} rows and {p} columns")));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..p).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) || scale == 0.0 {
            return Err(Error::Singular("design is rank deficient".into()));
        }
        let qty = qr.q().transpose() * y;
        return r.solve_upper_triangular(&qty).ok_or_else(|| Error::Singular("design is rank deficient".into()));
    }
    let mut a = x.transpose() * x;
    for i in 0..p {
        a[(i, i)] += 2.0 * n as f64 * ridge_penalty;
    }
    linalg::solve_spd(&a, &(x.transpose() * y))
}

/// Ridge solve from sufficient statistics: `(G + 2nλI)β = c`.
pub(crate) fn ridge_from_gram(g: &DMatrix<f64>, c: &DVector<f64>, n: f64, ridge: f64) -> Result<DVector<f64>> {
    let mut a = g.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += 2.0 * n * ridge;
    }
    match nalgebra::Cholesky::new(a.clone()) {
        Some(ch) => Ok(ch.solve(c)),
        None => Ok(linalg::cholesky_jittered(&a)?.0.solve(c)),
    }
}

/// Residual sum of squares `yᵀy − 2βᵀc + βᵀGβ`.
pub(crate) fn rss_from_gram(g: &DMatrix<f64>, c: &DVector<f64>, yy: f64, beta: &DVector<f64>) -> f64 {
    (yy - 2.0 * beta.dot(c) + (g * beta).dot(beta)).max(0.0)
}

/// Penalised ridge loss `½n⁻¹‖y − Xβ‖² + λ‖β‖²` of the ridge refit.
pub fn ridge_loss(x: &DMatrix<f64>, y: &DVector<f64>, ridge_penalty: f64) -> Result<f64> {
    let beta = fit_linear(x, y, ridge_penalty)?;
    let r = y - x * &beta;
    Ok(0.5 * r.norm_squared() / x.nrows() as f64 + ridge_penalty * beta.norm_squared())
}

/// Coordinate-descent elastic net minimising
/// `½n⁻¹‖y − Xβ‖² + λ(α‖β‖₁ + ½(1−α)‖β‖²)` without intercept.
pub fn fit_elastic_net(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, l1_ratio: f64) -> Result<DVector<f64>> {
    let g = x.transpose() * x;
    let c = x.transpose() * y;
    elastic_net_gram(&g, &c, y.norm_squared(), x.nrows() as f64, lambda, l1_ratio, None)
}

const EN_TOL: f64 = 1e-8;
const EN_MAX_SWEEPS: usize = 200_000;
/// Sweeps after which a small duality gap also counts as converged.
const EN_GAP_AFTER: usize = 1_000;
const EN_GAP_TOL: f64 = 1e-6;

pub(crate) fn elastic_net_gram(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    yy: f64,
    n: f64,
    lambda: f64,
    l1_ratio: f64,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::Config(format!("elastic net needs λ ≥ 0 and α ∈ [0,1], got {lambda}, {l1_ratio}")));
    }
    let p = g.nrows();
    let l1 = lambda * l1_ratio;
    let l2 = lambda * (1.0 - l1_ratio);
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut gb = g * &beta;
    let mut gap = f64::INFINITY;
    for sweep in 0..EN_MAX_SWEEPS {
        let mut max_delta = 0.0_f64;
        for j in 0..p {
            let gjj = g[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let z = (c[j] - gb[j] + gjj * beta[j]) / n;
            let new = soft_threshold(z, l1) / (gjj / n + l2);
            let delta = new - beta[j];
            if delta != 0.0 {
                gb.axpy(delta, &g.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < EN_TOL {
            return Ok(beta);
        }
        if sweep >= EN_GAP_AFTER {
            gap = duality_gap(&beta, &gb, c, yy, n * l1, n * l2);
            if gap <= EN_GAP_TOL * yy.max(f64::MIN_POSITIVE) {
                return Ok(beta);
            }
        }
    }
    Err(Error::Convergence { what: "elastic net", iterations: EN_MAX_SWEEPS, gap })
}

/// Duality gap of `½‖y − Xβ‖² + a‖β‖₁ + ½b‖β‖²` from Gram quantities.
fn duality_gap(beta: &DVector<f64>, gb: &DVector<f64>, c: &DVector<f64>, yy: f64, a: f64, b: f64) -> f64 {
    let bc = beta.dot(c);
    let r2 = (yy - 2.0 * bc + beta.dot(gb)).max(0.0);
    let xta = (c - gb - beta * b).amax();
    let scale = if xta > a { a / xta } else { 1.0 };
    let dual_part = if xta > a { 0.5 * (r2 + r2 * scale * scale) } else { r2 };
    dual_part + a * beta.lp_norm(1) - scale * (yy - bc) + 0.5 * b * (1.0 + scale * scale) * beta.norm_squared()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the elastic-net stationarity conditions.
pub fn elastic_net_kkt(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64, l1_ratio: f64) -> f64 {
    let n = x.nrows() as f64;
    let grad = x.transpose() * (y - x * beta) / n;
    let l1 = lambda * l1_ratio;
    let l2 = lambda * (1.0 - l1_ratio);
    (0..beta.len())
        .map(|j| {
            let s = grad[j] - l2 * beta[j];
            if beta[j] != 0.0 {
                (s - l1 * beta[j].signum()).abs()
            } else {
                (s.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lower and upper clamp applied to the screened support size.
pub const SMAX_RANGE: (usize, usize) = (2, 20);

/// Plug-in screen for the maximum support size using the default κ grid.
pub fn screen_smax(x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<usize> {
    screen_smax_with(x, y, &[0.5, 0.75, 1.0], seed)
}

/// Elastic net (α = 0.5) at `λ = κ·σ̂·√(ln p / n)`, κ picked by 3-fold CV;
/// returns the clamped nonzero count of the winning fit on all rows.
pub fn screen_smax_with(x: &DMatrix<f64>, y: &DVector<f64>, kappas: &[f64], seed: u64) -> Result<usize> {
    let (n, p) = x.shape();
    if kappas.is_empty() {
        return Err(Error::Config("κ grid is empty".into()));
    }
    if n < 6 {
        return Err(Error::Config(format!("screen_smax needs at least 6 rows, got {n}")));
    }
    // Rescale columns to ‖x_j‖² = n so λ has its textbook units.
    let mut xs = x.clone();
    for j in 0..p {
        let norm = xs.column(j).norm();
        if norm > 0.0 {
            xs.column_mut(j).scale_mut((n as f64).sqrt() / norm);
        }
    }
    let ridge = if n > 2 * p { 0.0 } else { 1e-3 };
    let beta = fit_linear(&xs, y, ridge).or_else(|_| fit_linear(&xs, y, 1e-3))?;
    let dof = if n > p { (n - p) as f64 } else { n as f64 };
    let sigma = ((y - &xs * beta).norm_squared() / dof).sqrt();
    let base = sigma * ((p.max(2) as f64).ln() / n as f64).sqrt();

    let folds = seed::fold_assignment(n, 3, seed);
    let g_full = xs.transpose() * &xs;
    let c_full = xs.transpose() * y;
    let yy_full = y.norm_squared();
    let mut best = (f64::INFINITY, kappas[0]);
    if kappas.len() > 1 {
        for &kappa in kappas {
            let mut sse = 0.0;
            for f in 0..3 {
                let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
                let xt = linalg::rows(&xs, &test);
                let yt = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
                let g = &g_full - xt.transpose() * &xt;
                let c = &c_full - xt.transpose() * &yt;
                let b = elastic_net_gram(&g, &c, yy_full - yt.norm_squared(), (n - test.len()) as f64, kappa * base, 0.5, None)?;
                sse += (&yt - &xt * b).norm_squared();
            }
            if sse < best.0 {
                best = (sse, kappa);
            }
        }
    }
    let fit = elastic_net_gram(&g_full, &c_full, yy_full, n as f64, best.1 * base, 0.5, None)?;
    let nonzero = fit.iter().filter(|b| **b != 0.0).count();
    Ok(nonzero.clamp(SMAX_RANGE.0, SMAX_RANGE.1))
}

/// Sufficient statistics of a (sub)sample for least-squares work.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub n: f64,
    pub xx: DMatrix<f64>,
    pub x: DVector<f64>,
    pub xy: DVector<f64>,
    pub y: f64,
    pub yy: f64,
}

impl Moments {
    pub fn of(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Moments {
            n: x.nrows() as f64,
            xx: x.transpose() * x,
            x: DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum())),
            xy: x.transpose() * y,
            y: y.sum(),
            yy: y.norm_squared(),
        }
    }

    pub fn minus(&self, other: &Moments) -> Moments {
        Moments {
            n: self.n - other.n,
            xx: &self.xx - &other.xx,
            x: &self.x - &other.x,
            xy: &self.xy - &other.xy,
            y: self.y - other.y,
            yy: self.yy - other.yy,
        }
    }

    /// Centred Gram, cross-product and response sum of squares.
    pub fn centred(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let xbar = &self.x / self.n;
        let ybar = self.y / self.n;
        let g = &self.xx - (&xbar * xbar.transpose()) * self.n;
        let c = &self.xy - &xbar * (self.n * ybar);
        (g, c, self.yy - self.n * ybar * ybar)
    }

    /// Sum of squared errors of `intercept + xᵀβ` on this sample.
    pub fn sse(&self, intercept: f64, beta: &DVector<f64>) -> f64 {
        let a = intercept;
        let v = self.yy - 2.0 * a * self.y - 2.0 * beta.dot(&self.xy)
            + self.n * a * a
            + 2.0 * a * beta.dot(&self.x)
            + (&self.xx * beta).dot(beta);
        v.max(0.0)
    }
}

/// Best size-`k` subset by ridge-refit RSS (no intercept).
pub fn exhaustive_best_subset(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, ridge_penalty: f64) -> Result<SparseFit> {
    exhaustive_best_subset_multi(x, std::slice::from_ref(y), k, ridge_penalty).map(|mut v| v.remove(0))
}

/// Best size-`k` subset minimising the RSS summed over several responses.
/// Returns one fit per response on the shared winning subset.
pub fn exhaustive_best_subset_multi(x: &DMatrix<f64>, ys: &[DVector<f64>], k: usize, ridge_penalty: f64) -> Result<Vec<SparseFit>> {
    let (n, p) = x.shape();
    if k == 0 || k > p {
        return Err(Error::Config(format!("subset size {k} outside 1..={p}")));
    }
    if ys.is_empty() || ys.iter().any(|y| y.len() != n) {
        return Err(Error::Config("responses must match the design's rows".into()));
    }
    let count = stats::binomial(p, k);
    if count > SUBSET_BUDGET {
        return Err(Error::Budget { count, budget: SUBSET_BUDGET });
    }
    let g = x.transpose() * x;
    let cs: Vec<DVector<f64>> = ys.iter().map(|y| x.transpose() * y).collect();
    let yys: Vec<f64> = ys.iter().map(|y| y.norm_squared()).collect();
    let mut best: Option<(f64, Vec<usize>, Vec<DVector<f64>>)> = None;
    for subset in stats::Combinations::new(p, k) {
        let gs = linalg::principal(&g, &subset);
        let mut total = 0.0;
        let mut betas = Vec::with_capacity(ys.len());
        for (c, &yy) in cs.iter().zip(&yys) {
            let cs = linalg::gather(c, &subset);
            let b = ridge_from_gram(&gs, &cs, n as f64, ridge_penalty)?;
            total += rss_from_gram(&gs, &cs, yy, &b);
            betas.push(b);
        }
        if best.as_ref().is_none_or(|(r, _, _)| total < *r) {
            best = Some((total, subset, betas));
        }
    }
    let (_, subset, betas) = best.expect("at least one subset");
    Ok(betas
        .iter()
        .zip(cs.iter().zip(&yys))
        .map(|(b, (c, &yy))| {
            let gs = linalg::principal(&g, &subset);
            let rss = rss_from_gram(&gs, &linalg::gather(c, &subset), yy, b);
            let mut fit = SparseFit::from_support(p, subset.clone(), b.as_slice(), 0.0, ridge_penalty, rss);
            // Keep the subset even if a refit coefficient is exactly zero.
            fit.support = subset.clone();
            fit
        })
        .collect())
}

/// Akaike criterion `n·ln(RSS/n) + 2s`.
pub fn aic(rss: f64, n: usize, size: usize) -> f64 {
    let nf = n as f64;
    nf * (rss / nf).ln() + 2.0 * size as f64
}

/// Extended BIC `n·ln(RSS/n) + s·ln n + 2γ·ln C(pool, s)`.
pub fn ebic(rss: f64, n: usize, size: usize, pool: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    nf * (rss / nf).ln() + size as f64 * nf.ln() + 2.0 * gamma * stats::ln_binomial(pool, size)
}

/// Least squares without intercept; falls back to [`DEFAULT_RIDGE`] when the
/// design is rank-deficient.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    match fit_linear(x, y, 0.0) {
        Err(Error::Singular(_)) => fit_linear(x, y, DEFAULT_RIDGE),
        other => other,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn gaussian_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::seed::rng(seed);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn linear_hand_cases() {
        let b = fit_linear(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.0).unwrap();
        assert!((b - DVector::from_vec(vec![1.0, 2.0, 3.0])).amax() < 1e-12);
        let b = fit_linear(&DMatrix::from_element(4, 1, 1.0), &DVector::from_element(4, 1.0), 0.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        // 1D ridge: β = Σxy / (Σx² + 2nλ) = 5 / (5 + 2·2·0.25) = 5/6.
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let b = fit_linear(&x, &DVector::from_vec(vec![1.0, 2.0]), 0.25).unwrap();
        assert!((b[0] - 5.0 / 6.0).abs() < 1e-12);
        let dup = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(matches!(fit_linear(&dup, &DVector::zeros(3), 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn elastic_net_limits() {
        let x = gaussian_design(80, 5, 1);
        let y = &x * DVector::from_vec(vec![1.0, -2.0, 0.0, 0.5, 0.0]) + gaussian_design(80, 1, 2).column(0) * 0.1;
        let ols = fit_linear(&x, &y, 0.0).unwrap();
        let en = fit_elastic_net(&x, &y, 0.0, 0.5).unwrap();
        assert!((ols - &en).amax() < 1e-6);
        let lmax = (x.transpose() * &y).amax() / (80.0 * 0.5);
        assert!(fit_elastic_net(&x, &y, lmax * 1.0001, 0.5).unwrap().amax() == 0.0);
        // Orthonormal design with α = 1: soft-thresholded projections.
        let q = x.clone().qr().q();
        let proj = q.transpose() * &y / 80.0;
        let q = q * 80f64.sqrt();
        let lasso = fit_elastic_net(&q, &y, 0.05, 1.0).unwrap();
        for j in 0..5 {
            let expect = soft_threshold(proj[j] * 80f64.sqrt(), 0.05);
            assert!((lasso[j] - expect).abs() < 1e-8, "{j}: {} vs {expect}", lasso[j]);
        }
    }

    #[test]
    fn elastic_net_satisfies_kkt() {
        let x = gaussian_design(200, 12, 5);
        let y = &x.column(0) * 2.0 - x.column(3) + gaussian_design(200, 1, 6).column(0);
        for (lambda, alpha) in [(0.01, 0.5), (0.1, 0.5), (0.3, 1.0), (0.05, 0.0)] {
            let b = fit_elastic_net(&x, &y, lambda, alpha).unwrap();
            assert!(elastic_net_kkt(&x, &y, &b, lambda, alpha) < 1e-6);
        }
    }

    #[test]
    fn duality_gap_vanishes_at_the_optimum() {
        let x = gaussian_design(200, 8, 21);
        let y = &x.column(1) * 1.5 + gaussian_design(200, 1, 22).column(0);
        let (g, c, n) = (x.transpose() * &x, x.transpose() * &y, 200.0);
        let (lambda, alpha) = (0.1, 0.5);
        let b = fit_elastic_net(&x, &y, lambda, alpha).unwrap();
        let at =
            |beta: &DVector<f64>| duality_gap(beta, &(&g * beta), &c, y.norm_squared(), n * lambda * alpha, n * lambda * (1.0 - alpha));
        assert!(at(&b).abs() < 1e-8 * y.norm_squared());
        assert!(at(&DVector::zeros(8)) > 1e-3 * y.norm_squared());
    }

    #[test]
    fn collinear_columns_still_converge() {
        let mut x = gaussian_design(300, 6, 31);
        let base = x.column(0).into_owned();
        for j in 1..6 {
            let jitter = gaussian_design(300, 1, 40 + j as u64).column(0) * 1e-4;
            x.set_column(j, &(&base + jitter));
        }
        let y = &base * 2.0 + gaussian_design(300, 1, 32).column(0) * 0.01;
        let b = fit_elastic_net(&x, &y, 1e-4, 0.5).unwrap();
        assert!((b.sum() - 2.0).abs() < 1e-2);
    }

    #[test]
    fn smax_screen_finds_planted_terms() {
        let x = gaussian_design(300, 30, 8);
        let y = &x.column(2) * 3.0 + &x.column(7) * 2.0 - &x.column(11) * 2.5 + gaussian_design(300, 1, 9).column(0) * 0.1;
        let s = screen_smax(&x, &y, 4).unwrap();
        assert!((3..=20).contains(&s), "s_max {s}");
        assert_eq!(screen_smax_with(&x, &y, &[1.0], 4).unwrap().clamp(2, 20), screen_smax_with(&x, &y, &[1.0], 4).unwrap());
    }

    #[test]
    fn smax_screen_on_noise_tracks_the_plug_in_threshold() {
        // With ‖x_j‖² = n the ℓ1 threshold is 0.5·κ·σ̂·√(ln p / n), so at
        // κ = 1 and p = 50 a null column survives when |z| > 0.99: about a
        // third of the columns marginally. The count is clamped at 20.
        let mut counts = Vec::new();
        for t in 0..10 {
            let x = gaussian_design(500, 50, 100 + t);
            let y = gaussian_design(500, 1, 200 + t).column(0).into_owned();
            let s = screen_smax(&x, &y, t).unwrap();
            assert!((SMAX_RANGE.0..=SMAX_RANGE.1).contains(&s));
            counts.push(s as f64);
        }
        let mean = stats::mean(&counts);
        assert!(mean > 5.0 && mean <= 20.0, "mean noise s_max {mean}");
    }

    #[test]
    fn exhaustive_recovers_planted_pair() {
        let x = gaussian_design(60, 8, 3);
        let y = &x.column(1) * 1.5 - &x.column(6) * 0.7;
        let fit = exhaustive_best_subset(&x, &y, 2, 0.0).unwrap();
        assert_eq!(fit.support, vec![1, 6]);
        assert!(fit.cv_score < 1e-18);
        let full = exhaustive_best_subset(&x, &y, 8, 1e-5).unwrap();
        let ridge = fit_linear(&x, &y, 1e-5).unwrap();
        for j in 0..8 {
            assert!((full.coefficients[j] - ridge[j]).abs() < 1e-10);
        }
        assert!(matches!(exhaustive_best_subset(&gaussian_design(5, 40, 1), &DVector::zeros(5), 10, 0.0), Err(Error::Budget { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_fit_is_scale_equivariant(seed in 0u64..1000, c in 0.1f64..10.0) {
            let x = gaussian_design(30, 4, seed);
            let y = gaussian_design(30, 1, seed + 1).column(0).into_owned();
            let a = fit_linear(&x, &y, 0.0).unwrap();
            let b = fit_linear(&x, &(&y * c), 0.0).unwrap();
            prop_assert!((a * c - b).amax() < 1e-9 * c.max(1.0));
        }

        #[test]
        fn kkt_holds_on_random_problems(seed in 0u64..1000, lambda in 0.001f64..0.5, alpha in 0.0f64..=1.0) {
            let x = gaussian_design(50, 6, seed);
            let y = gaussian_design(50, 1, seed + 7).column(0).into_owned();
            let b = fit_elastic_net(&x, &y, lambda, alpha).unwrap();
            prop_assert!(elastic_net_kkt(&x, &y, &b, lambda, alpha) < 1e-6);
        }
    }
}
