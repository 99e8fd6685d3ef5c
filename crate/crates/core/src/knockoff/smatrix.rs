//! Diagonal S-matrix for second-order knockoffs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SMatrixMethod {
    /// Equicorrelated: `d_j = min(1, 2λ_min)` on the correlation scale.
    Equi,
    /// Minimum variance-based reconstructability.
    Mvr,
}

const MVR_TOL: f64 = 1e-6;
const MVR_MAX_SWEEPS: usize = 1000;
/// Keeps `2Σ − D` strictly positive definite during MVR updates.
const MVR_MARGIN: f64 = 1e-6;

/// Solve for `diag(D)` on the correlation scale of `sigma`, then rescale by
/// the column variances. `2Σ − D ⪰ 0` holds for the result.
pub fn solve_smatrix(sigma: &DMatrix<f64>, method: SMatrixMethod) -> Result<Vec<f64>> {
    let p = sigma.nrows();
    let sd: Vec<f64> = (0..p).map(|j| sigma[(j, j)].max(0.0).sqrt()).collect();
    if sd.contains(&0.0) {
        return Err(Error::Singular("covariance has a zero diagonal entry".into()));
    }
    let corr = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { sigma[(i, j)] / (sd[i] * sd[j]) });
    let lmin = linalg::min_eigenvalue(&corr);
    if lmin.is_nan() || lmin <= 0.0 {
        return Err(Error::Singular(format!("correlation matrix has λ_min = {lmin:e}")));
    }
    let d_corr = match method {
        SMatrixMethod::Equi => vec![(2.0 * lmin).min(1.0); p],
        SMatrixMethod::Mvr => mvr(&corr, lmin)?,
    };
    Ok(d_corr.iter().zip(&sd).map(|(d, s)| d * s * s).collect())
}

/// MVR objective `Σ 1/d_j + Σ 1/λ_i(2C − D)` (up to constants).
pub fn mvr_objective(corr: &DMatrix<f64>, d: &[f64]) -> f64 {
    let mut l = corr * 2.0;
    for (j, dj) in d.iter().enumerate() {
        l[(j, j)] -= dj;
    }
    match l.cholesky() {
        Some(ch) => d.iter().map(|v| 1.0 / v).sum::<f64>() + ch.inverse().trace(),
        None => f64::INFINITY,
    }
}

/// Coordinate descent on `tr(D⁻¹) + tr((2C − D)⁻¹)`; each coordinate has a
/// closed-form minimiser given `M = (2C − D)⁻¹`, and `M` is updated by
/// Sherman–Morrison within a sweep and refactorised between sweeps.
fn mvr(corr: &DMatrix<f64>, lmin: f64) -> Result<Vec<f64>> {
    let p = corr.nrows();
    let mut d = vec![lmin.min(1.0); p];
    let mut prev = mvr_objective(corr, &d);
    for sweep in 0..MVR_MAX_SWEEPS {
        let mut l = corr * 2.0;
        for (j, dj) in d.iter().enumerate() {
            l[(j, j)] -= dj;
        }
        let mut m = l.cholesky().ok_or_else(|| Error::Singular("2C − D lost definiteness in MVR".into()))?.inverse();
        for j in 0..p {
            let mjj = m[(j, j)];
            let c = m.column(j).norm_squared();
            let sc = c.sqrt();
            let mut delta = (1.0 - sc * d[j]) / (sc + mjj);
            // Stay inside 2C − D ≻ 0 and D ≻ 0.
            delta = delta.min((1.0 - MVR_MARGIN) / mjj);
            delta = delta.max(MVR_MARGIN * 1e-3 - d[j]);
            if delta == 0.0 {
                continue;
            }
            let mj: DVector<f64> = m.column(j).into_owned();
            let denom = 1.0 - delta * mjj;
            m += (&mj * mj.transpose()) * (delta / denom);
            d[j] += delta;
        }
        let obj = mvr_objective(corr, &d);
        if !obj.is_finite() {
            return Err(Error::Singular("MVR objective became non-finite".into()));
        }
        if (prev - obj).abs() <= MVR_TOL * prev.abs().max(1.0) {
            return Ok(d);
        }
        prev = obj;
        if sweep + 1 == MVR_MAX_SWEEPS {
            return Err(Error::Convergence { what: "MVR S-matrix", iterations: MVR_MAX_SWEEPS, gap: (prev - obj).abs() });
        }
    }
    Ok(d)
}

/// Joint covariance `[[Σ, Σ − D], [Σ − D, Σ]]`.
pub fn joint_covariance(sigma: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let p = sigma.nrows();
    let mut g = DMatrix::zeros(2 * p, 2 * p);
    let mut off = sigma.clone();
    for (j, dj) in d.iter().enumerate() {
        off[(j, j)] -= dj;
    }
    g.view_mut((0, 0), (p, p)).copy_from(sigma);
    g.view_mut((p, p), (p, p)).copy_from(sigma);
    g.view_mut((0, p), (p, p)).copy_from(&off);
    g.view_mut((p, 0), (p, p)).copy_from(&off);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn equicorrelated(p: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn equi_on_identity_is_one() {
        let d = solve_smatrix(&DMatrix::identity(4, 4), SMatrixMethod::Equi).unwrap();
        assert!(d.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn equi_on_equicorrelated_is_twice_min_eigenvalue() {
        // λ_min = 1 − ρ for ρ > 0.
        let d = solve_smatrix(&equicorrelated(5, 0.6), SMatrixMethod::Equi).unwrap();
        assert!(d.iter().all(|&v| (v - 0.8).abs() < 1e-10));
    }

    #[test]
    fn equi_rescales_by_variance() {
        let mut s = equicorrelated(3, 0.6);
        let scale: [f64; 3] = [4.0, 1.0, 9.0];
        for i in 0..3 {
            for j in 0..3 {
                s[(i, j)] *= (scale[i] * scale[j]).sqrt();
            }
        }
        let d = solve_smatrix(&s, SMatrixMethod::Equi).unwrap();
        for j in 0..3 {
            assert!((d[j] - 0.8 * scale[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn mvr_on_identity_is_one() {
        let d = solve_smatrix(&DMatrix::identity(3, 3), SMatrixMethod::Mvr).unwrap();
        assert!(d.iter().all(|&v| (v - 1.0).abs() < 1e-3), "{d:?}");
    }

    #[test]
    fn mvr_improves_on_equi() {
        let mut c = DMatrix::identity(6, 6);
        for i in 0..5 {
            c[(i, i + 1)] = 0.45;
            c[(i + 1, i)] = 0.45;
        }
        let equi = solve_smatrix(&c, SMatrixMethod::Equi).unwrap();
        let mvr = solve_smatrix(&c, SMatrixMethod::Mvr).unwrap();
        let shrunk: Vec<f64> = equi.iter().map(|v| v * 0.999).collect();
        assert!(mvr_objective(&c, &mvr) <= mvr_objective(&c, &shrunk) + 1e-9);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let c = DMatrix::from_element(2, 2, 1.0);
        assert!(solve_smatrix(&c, SMatrixMethod::Equi).is_err());
    }

    proptest! {
        #[test]
        fn joint_covariance_is_psd(rho in -0.15f64..0.9, p in 2usize..7, mvr in any::<bool>()) {
            let c = equicorrelated(p, rho);
            let method = if mvr { SMatrixMethod::Mvr } else { SMatrixMethod::Equi };
            let d = solve_smatrix(&c, method).unwrap();
            let g = joint_covariance(&c, &d);
            prop_assert!(linalg::min_eigenvalue(&g) >= -1e-8);
            prop_assert!(d.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-9));
        }
    }
}
