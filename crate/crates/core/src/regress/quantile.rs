//! Quantile regression and recentred-influence-function regression.

use nalgebra::{DMatrix, DVector};

use super::fit_linear;
use crate::error::{Error, Result};
use crate::stats;

/// Smoothed pinball objective `n⁻¹Σρ_h(y − Xβ) + λ‖β‖²` and its gradient,
/// where `ρ_h(r) = ½H_h(r) + (τ − ½)r` and `H_h` is the Huber function
/// approximating `|r|` within `h` of zero.
pub fn smoothed_pinball(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: f64, l2_penalty: f64, h: f64) -> (f64, DVector<f64>) {
    let n = x.nrows() as f64;
    let r = y - x * beta;
    let mut value = 0.0;
    let mut psi = DVector::zeros(r.len());
    for (i, &ri) in r.iter().enumerate() {
        let (hub, dhub) = if ri.abs() <= h { (ri * ri / (2.0 * h) + h / 2.0, ri / h) } else { (ri.abs(), ri.signum()) };
        value += 0.5 * hub + (tau - 0.5) * ri;
        psi[i] = 0.5 * dhub + (tau - 0.5);
    }
    let grad = -(x.transpose() * psi) / n + beta * (2.0 * l2_penalty);
    (value / n + l2_penalty * beta.norm_squared(), grad)
}

fn exact_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: f64, l2: f64) -> f64 {
    let r = y - x * beta;
    r.iter().map(|&u| stats::pinball(u, tau)).sum::<f64>() / x.nrows() as f64 + l2 * beta.norm_squared()
}

const NEWTON_MAX: usize = 200;

/// ℓ2-penalised linear quantile regression.
///
/// Damped Newton on the smoothed pinball with the smoothing width shrunk
/// geometrically down to `1e−4·sd(y)`.
pub fn fit_quantile(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64, l2_penalty: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("quantile level {tau} outside (0,1)")));
    }
    if n == 0 || p == 0 || y.len() != n {
        return Err(Error::Config("quantile regression needs a non-empty design matching y".into()));
    }
    let spread = stats::sd(y.as_slice());
    let spread = if spread.is_finite() && spread > 0.0 { spread } else { y.amax().max(1.0) };
    let h_final = 1e-4 * spread;
    let mut beta = fit_linear(x, y, 1e-6).unwrap_or_else(|_| DVector::zeros(p));
    let mut h = spread;
    loop {
        newton(x, y, &mut beta, tau, l2_penalty, h)?;
        if h <= h_final {
            break;
        }
        h = (h * 0.1).max(h_final);
    }
    let zero = DVector::zeros(p);
    if exact_objective(x, y, &beta, tau, l2_penalty) > exact_objective(x, y, &zero, tau, l2_penalty) {
        return Ok(zero);
    }
    Ok(beta)
}

fn newton(x: &DMatrix<f64>, y: &DVector<f64>, beta: &mut DVector<f64>, tau: f64, l2: f64, h: f64) -> Result<()> {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let xtx_diag = (0..p).map(|j| x.column(j).norm_squared() / n).fold(0.0, f64::max).max(1e-300);
    let (mut f, mut g) = smoothed_pinball(x, y, beta, tau, l2, h);
    for _ in 0..NEWTON_MAX {
        let gnorm = g.amax();
        if gnorm < 1e-12 * (1.0 + f.abs()) {
            return Ok(());
        }
        let resid = y - x * &*beta;
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (i, &ri) in resid.iter().enumerate() {
            if ri.abs() <= h {
                let row = x.row(i);
                hess.ger(0.5 / (h * n), &row.transpose(), &row.transpose(), 1.0);
            }
        }
        for j in 0..p {
            hess[(j, j)] += 2.0 * l2 + 1e-10 * xtx_diag;
        }
        let mut damping = 0.0;
        let step = loop {
            let mut a = hess.clone();
            for j in 0..p {
                a[(j, j)] += damping;
            }
            if let Some(ch) = a.cholesky() {
                break ch.solve(&g);
            }
            damping = if damping == 0.0 { 1e-8 * xtx_diag } else { damping * 10.0 };
        };
        // Backtracking line search; fall back to a scaled gradient step.
        let mut t = 1.0;
        let slope = -g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &*beta - &step * t;
            let (ft, gt) = smoothed_pinball(x, y, &trial, tau, l2, h);
            if ft <= f + 1e-4 * t * slope {
                let progress = f - ft;
                *beta = trial;
                f = ft;
                g = gt;
                accepted = true;
                if progress <= 1e-15 * f.abs().max(1e-300) {
                    return Ok(());
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let lr = h / (xtx_diag + 2.0 * l2);
            let trial = &*beta - &g * lr;
            let (ft, gt) = smoothed_pinball(x, y, &trial, tau, l2, h);
            if ft >= f {
                return Ok(());
            }
            *beta = trial;
            f = ft;
            g = gt;
        }
    }
    Ok(())
}

/// RIF regression output.
#[derive(Debug, Clone, PartialEq)]
pub struct RifFit {
    pub coefficients: DVector<f64>,
    /// HC3 heteroscedasticity-robust standard errors.
    pub std_errors: DVector<f64>,
    pub quantile: f64,
    pub density: f64,
    pub rif: DVector<f64>,
}

/// Regress the recentred influence function of the τ-quantile on `x`.
pub fn fit_rif(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<RifFit> {
    let (n, p) = x.shape();
    if n < p + 2 {
        return Err(Error::Config(format!("RIF regression needs n ≥ p + 2, got n={n}, p={p}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("quantile level {tau} outside (0,1)")));
    }
    let sorted = stats::sorted(y.as_slice());
    let q = stats::quantile_sorted(&sorted, tau);
    let density = kde_at(&sorted, q);
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::Degenerate(format!("kernel density at the {tau}-quantile is {density}")));
    }
    let rif = y.map(|v| q + (tau - if v <= q { 1.0 } else { 0.0 }) / density);
    let coefficients = fit_linear(x, &rif, 0.0)?;
    let resid = &rif - x * &coefficients;
    let xtx_inv = (x.transpose() * x).try_inverse().ok_or_else(|| Error::Singular("RIF design is rank deficient".into()))?;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i).transpose();
        let leverage = (row.transpose() * &xtx_inv * &row)[(0, 0)];
        let w = (resid[i] / (1.0 - leverage).max(1e-12)).powi(2);
        meat.ger(w, &row, &row, 1.0);
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    let std_errors = DVector::from_iterator(p, (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()));
    Ok(RifFit { coefficients, std_errors, quantile: q, density, rif })
}

/// Gaussian kernel density with Silverman's bandwidth, evaluated at `at`.
fn kde_at(sorted: &[f64], at: f64) -> f64 {
    let n = sorted.len() as f64;
    let sd = stats::sd(sorted);
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * n.powf(-0.2);
    if !(bw > 0.0) {
        return 0.0;
    }
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    sorted.iter().map(|v| (-0.5 * ((at - v) / bw).powi(2)).exp()).sum::<f64>() * norm
}
