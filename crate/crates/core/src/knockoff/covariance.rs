//! Covariance estimation for Gaussian knockoffs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// Covariance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovMethod {
    LedoitWolf,
    GraphicalLassoCv,
}

impl std::fmt::Display for CovMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovMethod::LedoitWolf => "ledoit-wolf",
            CovMethod::GraphicalLassoCv => "graphical-lasso-cv",
        })
    }
}

/// Fitted Gaussian model of the design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub method: CovMethod,
    /// Ledoit–Wolf shrinkage weight, or the graphical-lasso penalty.
    pub shrinkage_or_alpha: f64,
    /// Sparse precision on the correlation scale (graphical lasso only).
    pub precision: Option<DMatrix<f64>>,
}

impl CovarianceModel {
    /// Per-column standard deviations implied by `sigma`.
    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.sigma.nrows()).map(|j| self.sigma[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Relative floor on the smallest eigenvalue of every estimate.
pub const EIGEN_FLOOR: f64 = 1e-8;

const GLASSO_GRID: usize = 10;
const GLASSO_FOLDS: usize = 3;

/// Estimate the row covariance of `x`. `seed` drives the CV folds of the
/// graphical lasso and is ignored by Ledoit–Wolf.
pub fn estimate_covariance(x: &DMatrix<f64>, method: CovMethod, seed: u64) -> Result<CovarianceModel> {
    let (n, p) = x.shape();
    if n < 3 {
        return Err(Error::Config(format!("covariance estimation needs n ≥ 3, got {n}")));
    }
    if p == 0 {
        return Err(Error::Config("covariance estimation needs at least one column".into()));
    }
    let mean = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
    let centred = centre(x, &mean);
    let (mut sigma, weight, precision) = match method {
        CovMethod::LedoitWolf => {
            let (s, w) = ledoit_wolf(&centred);
            (s, w, None)
        }
        CovMethod::GraphicalLassoCv => {
            let (s, alpha, theta) = graphical_lasso_cv(&centred, seed)?;
            (s, alpha, Some(theta))
        }
    };
    linalg::symmetrize(&mut sigma);
    linalg::floor_spectrum(&mut sigma, EIGEN_FLOOR);
    Ok(CovarianceModel { mean, sigma, method, shrinkage_or_alpha: weight, precision })
}

fn centre(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, m) in mean.iter().enumerate() {
        c.column_mut(j).add_scalar_mut(-m);
    }
    c
}

/// Ledoit–Wolf shrinkage of the (biased) sample covariance towards `μI`.
fn ledoit_wolf(xc: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (n, p) = xc.shape();
    let nf = n as f64;
    let s = xc.transpose() * xc / nf;
    let mu = s.trace() / p as f64;
    let mut target_gap = s.clone();
    for i in 0..p {
        target_gap[(i, i)] -= mu;
    }
    let d2 = target_gap.norm_squared();
    if d2 <= 0.0 {
        return (s, 0.0);
    }
    // Σ_i ‖x_i x_iᵀ − S‖²_F = Σ_i ‖x_i‖⁴ − n‖S‖²_F
    let fourth: f64 = xc.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let b2_bar = ((fourth - nf * s.norm_squared()) / (nf * nf)).max(0.0);
    let shrinkage = b2_bar.min(d2) / d2;
    let mut out = &s * (1.0 - shrinkage);
    for i in 0..p {
        out[(i, i)] += shrinkage * mu;
    }
    (out, shrinkage)
}

fn correlation(s: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let p = s.nrows();
    let sd: Vec<f64> = (0..p).map(|j| s[(j, j)].max(0.0).sqrt()).collect();
    let c = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            s[(i, j)] / (sd[i] * sd[j])
        } else {
            0.0
        }
    });
    (c, sd)
}

/// Graphical lasso with the penalty chosen by 3-fold held-out likelihood.
/// Returns the covariance (original scale), the penalty and the precision
/// on the correlation scale.
fn graphical_lasso_cv(xc: &DMatrix<f64>, seed: u64) -> Result<(DMatrix<f64>, f64, DMatrix<f64>)> {
    let (n, p) = xc.shape();
    let s = xc.transpose() * xc / n as f64;
    let (corr, sd) = correlation(&s);
    let max_off =
        (0..p).flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| corr[(i, j)].abs()).fold(0.0, f64::max);
    if max_off == 0.0 {
        let theta = DMatrix::identity(p, p);
        return Ok((s, 0.0, theta));
    }
    let grid: Vec<f64> = (0..GLASSO_GRID).map(|k| max_off * 10f64.powf(-3.0 + 3.0 * k as f64 / (GLASSO_GRID - 1) as f64)).collect();
    let folds = seed::fold_assignment(n, GLASSO_FOLDS, seed);
    let mut scores = vec![0.0; grid.len()];
    for f in 0..GLASSO_FOLDS {
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let xtr = linalg::rows(xc, &train);
        let xte = linalg::rows(xc, &test);
        let mtr = DVector::from_iterator(p, xtr.column_iter().map(|c| c.mean()));
        let xtr = centre(&xtr, &mtr);
        let xte = centre(&xte, &mtr);
        let s_tr = xtr.transpose() * &xtr / train.len() as f64;
        let s_te = xte.transpose() * &xte / test.len() as f64;
        // Both on the training correlation scale.
        let sd_tr: Vec<f64> = (0..p).map(|j| s_tr[(j, j)].max(0.0).sqrt()).collect();
        let norm = |v: &DMatrix<f64>| {
            DMatrix::from_fn(p, p, |i, j| {
                if sd_tr[i] > 0.0 && sd_tr[j] > 0.0 {
                    v[(i, j)] / (sd_tr[i] * sd_tr[j])
                } else if i == j {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let (c_tr, c_te) = (norm(&s_tr), norm(&s_te));
        for (k, &alpha) in grid.iter().enumerate() {
            let w = graphical_lasso(&c_tr, alpha).0;
            scores[k] += held_out_loglik(&w, &c_te);
        }
    }
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::Estimation("held-out likelihood is non-finite on every grid point".into()))?;
    let alpha = grid[best];
    let (w, theta) = graphical_lasso(&corr, alpha);
    let sigma = DMatrix::from_fn(p, p, |i, j| w[(i, j)] * sd[i] * sd[j]);
    Ok((sigma, alpha, theta))
}

/// `−log det W − tr(S W⁻¹)`, or −∞ when `W` is not positive definite.
fn held_out_loglik(w: &DMatrix<f64>, s_test: &DMatrix<f64>) -> f64 {
    match w.clone().cholesky() {
        Some(ch) => {
            let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let inv = ch.inverse();
            -logdet - (s_test * inv).trace()
        }
        None => f64::NEG_INFINITY,
    }
}

const GLASSO_MAX_SWEEPS: usize = 100;
const GLASSO_TOL: f64 = 1e-4;
const LASSO_MAX_SWEEPS: usize = 1000;
const LASSO_TOL: f64 = 1e-8;

/// Block coordinate descent (Friedman, Hastie & Tibshirani) for
/// `max log det Θ − tr(SΘ) − α‖Θ‖₁,off`. Returns `(W = Θ⁻¹, Θ)`.
pub fn graphical_lasso(s: &DMatrix<f64>, alpha: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = s.nrows();
    let mut w = s.clone();
    if p == 1 {
        return (w.clone(), DMatrix::from_element(1, 1, 1.0 / w[(0, 0)]));
    }
    let mut betas = vec![DVector::<f64>::zeros(p - 1); p];
    for _ in 0..GLASSO_MAX_SWEEPS {
        let mut change = 0.0;
        for j in 0..p {
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let w11 = linalg::principal(&w, &others);
            let s12 = DVector::from_iterator(p - 1, others.iter().map(|&k| s[(k, j)]));
            let beta = &mut betas[j];
            lasso_cd(&w11, &s12, alpha, beta);
            let w12 = &w11 * &*beta;
            for (m, &k) in others.iter().enumerate() {
                change += (w[(k, j)] - w12[m]).abs();
                w[(k, j)] = w12[m];
                w[(j, k)] = w12[m];
            }
        }
        let off = p * (p - 1);
        if change / off as f64 <= GLASSO_TOL * 1e-2 {
            break;
        }
    }
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let w12 = DVector::from_iterator(p - 1, others.iter().map(|&k| w[(k, j)]));
        let beta = &betas[j];
        let t22 = 1.0 / (w[(j, j)] - w12.dot(beta)).max(f64::MIN_POSITIVE);
        theta[(j, j)] = t22;
        for (m, &k) in others.iter().enumerate() {
            theta[(k, j)] = -beta[m] * t22;
        }
    }
    linalg::symmetrize(&mut theta);
    (w, theta)
}

/// Lasso `min ½βᵀVβ − bᵀβ + α‖β‖₁` by coordinate descent, warm-started.
fn lasso_cd(v: &DMatrix<f64>, b: &DVector<f64>, alpha: f64, beta: &mut DVector<f64>) {
    let m = v.nrows();
    let mut vb = v * &*beta;
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_delta = 0.0_f64;
        for j in 0..m {
            let vjj = v[(j, j)];
            if vjj <= 0.0 {
                continue;
            }
            let z = b[j] - vb[j] + vjj * beta[j];
            let new = if z > alpha {
                (z - alpha) / vjj
            } else if z < -alpha {
                (z + alpha) / vjj
            } else {
                0.0
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                vb.axpy(delta, &v.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < LASSO_TOL {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seed::rng(seed);
        DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ledoit_wolf_is_close_to_identity_on_white_data() {
        let x = normal_matrix(100_000, 5, 1);
        let cov = estimate_covariance(&x, CovMethod::LedoitWolf, 0).unwrap();
        assert!((cov.sigma - DMatrix::identity(5, 5)).amax() < 0.02);
    }

    #[test]
    fn ledoit_wolf_fixes_scaled_identity() {
        // Rows ±e_j·√p give a sample covariance exactly equal to 2·I.
        let p = 4;
        let mut x = DMatrix::zeros(2 * p, p);
        for j in 0..p {
            x[(2 * j, j)] = 2.0 * (p as f64).sqrt() / 2f64.sqrt() * 1.0;
            x[(2 * j + 1, j)] = -x[(2 * j, j)];
        }
        let s = x.transpose() * &x / (2 * p) as f64;
        let cov = estimate_covariance(&x, CovMethod::LedoitWolf, 0).unwrap();
        assert!((cov.sigma - &s).amax() < 1e-12);
        assert_eq!(cov.shrinkage_or_alpha, 0.0);
    }

    #[test]
    fn ledoit_wolf_matches_shrinkage_formula() {
        let x = normal_matrix(40, 6, 3);
        let mean = DVector::from_iterator(6, x.column_iter().map(|c| c.mean()));
        let xc = centre(&x, &mean);
        let (sigma, shrink) = ledoit_wolf(&xc);
        // Independent evaluation of b̄² by explicit outer products.
        let s = xc.transpose() * &xc / 40.0;
        let mu = s.trace() / 6.0;
        let d2 = (&s - DMatrix::identity(6, 6) * mu).norm_squared();
        let b2: f64 = xc.row_iter().map(|r| (r.transpose() * r - &s).norm_squared()).sum::<f64>() / 1600.0;
        let expect = b2.min(d2) / d2;
        assert!((shrink - expect).abs() < 1e-12);
        let manual = &s * (1.0 - expect) + DMatrix::identity(6, 6) * (expect * mu);
        assert!((sigma - manual).amax() < 1e-12);
    }

    #[test]
    fn graphical_lasso_recovers_chain_sparsity() {
        // Chain precision: tridiagonal with 0.4 off-diagonals.
        let p = 8;
        let mut theta = DMatrix::identity(p, p);
        for i in 0..p - 1 {
            theta[(i, i + 1)] = 0.4;
            theta[(i + 1, i)] = 0.4;
        }
        let sigma = theta.clone().try_inverse().unwrap();
        let l = sigma.clone().cholesky().unwrap().l();
        let x = normal_matrix(2000, p, 5) * l.transpose();
        let cov = estimate_covariance(&x, CovMethod::GraphicalLassoCv, 7).unwrap();
        let est = cov.precision.unwrap();
        let mut correct = 0;
        let mut total = 0;
        for i in 0..p {
            for j in (i + 2)..p {
                total += 1;
                if est[(i, j)].abs() < 0.02 * est[(i, i)].abs() {
                    correct += 1;
                }
            }
        }
        assert!(correct as f64 >= 0.8 * total as f64, "{correct}/{total} zeros recovered");
        assert!(crate::linalg::min_eigenvalue(&cov.sigma) > 0.0);
    }

    #[test]
    fn estimates_are_floored_and_symmetric() {
        let mut x = normal_matrix(50, 4, 9);
        let c0 = x.column(0).into_owned();
        x.set_column(3, &c0);
        for method in [CovMethod::LedoitWolf, CovMethod::GraphicalLassoCv] {
            let cov = estimate_covariance(&x, method, 1).unwrap();
            assert!((&cov.sigma - cov.sigma.transpose()).amax() <= 1e-12);
            let floor = EIGEN_FLOOR * cov.sigma.trace() / 4.0;
            assert!(crate::linalg::min_eigenvalue(&cov.sigma) >= floor * 0.999);
        }
    }
}
