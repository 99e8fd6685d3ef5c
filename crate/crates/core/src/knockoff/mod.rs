//! Model-X Gaussian knockoffs: covariance, S-matrix, sampling, feature
//! statistics, the knockoff+ threshold and e-values.

mod covariance;
mod smatrix;
mod statistic;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regress;
use crate::seed;

pub use covariance::{estimate_covariance, graphical_lasso, CovMethod, CovarianceModel, EIGEN_FLOOR};
pub use smatrix::{joint_covariance, mvr_objective, solve_smatrix, SMatrixMethod};
pub use statistic::{feature_statistic, shap_importance, StatisticKind, SWAP_INT_GRID};

/// Draw knockoff copies of the rows of `x` under `N(μ, Σ)`.
///
/// Columns with `d_j = 0` are copied exactly. The conditional covariance
/// `2D − DΣ⁻¹D` is factorised with doubling jitter.
pub fn sample_knockoffs(x: &DMatrix<f64>, model: &CovarianceModel, d: &[f64], seed: u64) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if model.sigma.nrows() != p || d.len() != p {
        return Err(Error::Config(format!(
            "knockoff sampler: design has {p} columns, model {}, S-matrix {}",
            model.sigma.nrows(),
            d.len()
        )));
    }
    let active: Vec<usize> = (0..p).filter(|&j| d[j] > 0.0).collect();
    let mut out = x.clone();
    if active.is_empty() {
        return Ok(out);
    }
    let (chol, _) = linalg::cholesky_jittered(&model.sigma).map_err(|e| Error::Sampling(e.to_string()))?;
    let dmat = DMatrix::from_diagonal(&DVector::from_column_slice(d));
    // Σ⁻¹D without forming Σ⁻¹.
    let sinv_d = chol.solve(&dmat);
    let mut cond = &dmat * 2.0 - &dmat * &sinv_d;
    linalg::symmetrize(&mut cond);
    let cond_a = linalg::principal(&cond, &active);
    let (factor, _) = linalg::cholesky_jittered(&cond_a).map_err(|e| Error::Sampling(e.to_string()))?;
    let l = factor.l();

    let mut centred = x.clone();
    for j in 0..p {
        centred.column_mut(j).add_scalar_mut(-model.mean[j]);
    }
    let shift = &centred * linalg::columns(&sinv_d, &active);
    let mut rng = seed::rng(seed);
    let z = DMatrix::<f64>::from_fn(n, active.len(), |_, _| StandardNormal.sample(&mut rng));
    let noise = z * l.transpose();
    for (a, &j) in active.iter().enumerate() {
        for i in 0..n {
            out[(i, j)] = x[(i, j)] - shift[(i, a)] + noise[(i, a)];
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Sampling("non-finite knockoff entries".into()));
    }
    Ok(out)
}

/// `[X, X̃]`.
pub fn augment(x: &DMatrix<f64>, knockoffs: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut aug = DMatrix::zeros(n, 2 * p);
    aug.view_mut((0, 0), (n, p)).copy_from(x);
    aug.view_mut((0, p), (n, p)).copy_from(knockoffs);
    aug
}

/// Data-dependent threshold: the smallest `τ ∈ {|W_j| : W_j ≠ 0}` with
/// `(offset + #{W ≤ −τ}) / #{W ≥ τ} ≤ q`. Returns `(τ, selected indices)`,
/// or `(+∞, ∅)` when no candidate qualifies.
pub fn knockoff_threshold(w: &[f64], q: f64, offset: usize) -> (f64, Vec<usize>) {
    let mut candidates: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for &tau in &candidates {
        let pos = w.iter().filter(|&&v| v >= tau).count();
        if pos == 0 {
            continue;
        }
        let neg = w.iter().filter(|&&v| v <= -tau).count();
        if (offset + neg) as f64 / pos as f64 <= q {
            let sel = (0..w.len()).filter(|&j| w[j] >= tau).collect();
            return (tau, sel);
        }
    }
    (f64::INFINITY, Vec::new())
}

/// Knockoff e-values `e_j = p·1{W_j ≥ τ} / (1 + #{W ≤ −τ})`.
pub fn evalues(w: &[f64], tau: f64) -> Vec<f64> {
    let p = w.len() as f64;
    if !tau.is_finite() {
        return vec![0.0; w.len()];
    }
    let neg = w.iter().filter(|&&v| v <= -tau).count() as f64;
    w.iter().map(|&v| if v >= tau { p / (1.0 + neg) } else { 0.0 }).collect()
}

/// Settings of one knockoff filter run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnockoffSettings {
    pub smatrix: SMatrixMethod,
    pub statistic: StatisticKind,
    /// Level at which each realisation's threshold is computed.
    pub base_q: f64,
    /// 1 for knockoff+, 0 for the plain knockoff threshold.
    pub offset: usize,
    /// Support cap of the augmented sparse fit.
    pub s_max: usize,
    pub ridge_penalty: f64,
}

/// One knockoff draw and the resulting statistics for one response.
#[derive(Debug, Clone)]
pub struct KnockoffRealisation {
    /// Shared between responses of the same draw.
    pub knockoff_design: Arc<DMatrix<f64>>,
    pub s_diag: Arc<Vec<f64>>,
    pub statistic: Vec<f64>,
    pub threshold: f64,
    pub evalues: Vec<f64>,
    pub base_q: f64,
    pub seed: u64,
}

/// Precomputed sampler state: covariance model and S-matrix, with the
/// S-matrix zeroed on constant columns.
#[derive(Debug, Clone)]
pub struct KnockoffSampler {
    pub model: CovarianceModel,
    pub s_diag: Arc<Vec<f64>>,
}

impl KnockoffSampler {
    pub fn new(x: &DMatrix<f64>, method: CovMethod, smatrix: SMatrixMethod, seed: u64) -> Result<Self> {
        let model = estimate_covariance(x, method, seed)?;
        let mut d = solve_smatrix(&model.sigma, smatrix)?;
        for (j, col) in x.column_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                d[j] = 0.0;
            }
        }
        Ok(KnockoffSampler { model, s_diag: Arc::new(d) })
    }

    pub fn sample(&self, x: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
        sample_knockoffs(x, &self.model, &self.s_diag, seed)
    }

    /// One draw shared across `responses`; each response gets its own fit,
    /// statistic, threshold and e-values.
    pub fn realise(
        &self,
        x: &DMatrix<f64>,
        responses: &[DVector<f64>],
        settings: &KnockoffSettings,
        seed: u64,
    ) -> Result<Vec<KnockoffRealisation>> {
        let knock = Arc::new(self.sample(x, seed::derive(seed, "knockoff-draw", 0))?);
        let aug = augment(x, &knock);
        let s_max = settings.s_max.clamp(1, aug.ncols());
        responses
            .iter()
            .enumerate()
            .map(|(r, y)| {
                let fold_seed = seed::derive(seed, "knockoff-fit", r as u64);
                let fit = regress::fit_splicing_with(&aug, y, s_max, settings.ridge_penalty, fold_seed)?;
                let w = feature_statistic(&aug, y, &fit, settings.statistic)?;
                let (tau, _) = knockoff_threshold(&w, settings.base_q, settings.offset);
                let e = evalues(&w, tau);
                Ok(KnockoffRealisation {
                    knockoff_design: Arc::clone(&knock),
                    s_diag: Arc::clone(&self.s_diag),
                    statistic: w,
                    threshold: tau,
                    evalues: e,
                    base_q: settings.base_q,
                    seed,
                })
            })
            .collect()
    }
}
