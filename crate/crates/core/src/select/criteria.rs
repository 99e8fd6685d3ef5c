//! Out-of-sample criteria: conformal intervals, relative pinball, RICOMP,
//! RIF coefficient uncertainty, Murphy–Ehm miscalibration and CWC.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regress::{self, fit_linear, fit_quantile, fit_rif};
use crate::seed;
use crate::stats;

/// Quantile levels of the probabilistic forecast.
pub const FORECAST_LEVELS: [f64; 3] = [0.05, 0.5, 0.95];
/// Smallest sample accepted by [`conformal_intervals`].
pub const MIN_CV_ROWS: usize = 30;
/// Fewest points accepted by [`murphy_ehm`].
pub const MIN_MURPHY_POINTS: usize = 10;

/// Cross-validation plan shared by every alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    pub miscoverage: f64,
    /// ℓ2 penalty of the quantile regressions.
    pub qr_penalty: f64,
    /// Ridge penalty of the median model.
    pub ridge_penalty: f64,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            folds: 3,
            repeats: 10,
            miscoverage: 0.1,
            qr_penalty: regress::DEFAULT_RIDGE,
            ridge_penalty: regress::DEFAULT_RIDGE,
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.repeats == 0 {
            return Err(Error::Config(format!("need ≥ 2 folds and ≥ 1 repeat, got {} and {}", self.folds, self.repeats)));
        }
        if !(self.miscoverage > 0.0 && self.miscoverage < 1.0) {
            return Err(Error::Config(format!("miscoverage {} outside (0,1)", self.miscoverage)));
        }
        if !(self.qr_penalty >= 0.0 && self.ridge_penalty >= 0.0) {
            return Err(Error::Config("penalties must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One train/test split of the repeated K-fold plan.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub index: usize,
    pub repeat: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Repeat-major splits; identical for every alternative given the same plan.
pub(crate) fn cv_splits(n: usize, plan: &CvPlan) -> Vec<Split> {
    let mut out = Vec::with_capacity(plan.folds * plan.repeats);
    for repeat in 0..plan.repeats {
        let assignment = seed::fold_assignment(n, plan.folds, seed::derive(plan.seed, "select-folds", repeat as u64));
        for fold in 0..plan.folds {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == fold);
            out.push(Split { index: out.len(), repeat, train, test });
        }
    }
    out
}

/// Out-of-fold forecasts of one repeat; every row is predicted exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatForecast {
    /// Uncalibrated quantile-regression forecasts at 0.05 and 0.95.
    pub lower_raw: Vec<f64>,
    pub upper_raw: Vec<f64>,
    /// Ridge forecast of the median.
    pub median: Vec<f64>,
    /// Conformalised bounds, ordered around the median.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RepeatForecast {
    /// Forecast at one of [`FORECAST_LEVELS`].
    pub fn at_level(&self, level: usize) -> &[f64] {
        match level {
            0 => &self.lower_raw,
            1 => &self.median,
            _ => &self.upper_raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBundle {
    pub repeats: Vec<RepeatForecast>,
    /// Conformal adjustment per split, repeat-major.
    pub adjustments: Vec<f64>,
    /// Fraction of held-out responses inside the conformal interval.
    pub picp: f64,
    /// Mean interval width over the observed response range.
    pub nmpil: f64,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Split conformal quantile regression under repeated K-fold.
pub fn conformal_intervals(x: &DMatrix<f64>, y: &DVector<f64>, plan: &CvPlan) -> Result<IntervalBundle> {
    plan.validate()?;
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Config("response length differs from design rows".into()));
    }
    if n < MIN_CV_ROWS {
        return Err(Error::Config(format!("conformal intervals need n ≥ {MIN_CV_ROWS}, got {n}")));
    }
    let (y_min, y_max) = (y.min(), y.max());
    if !(y_max > y_min) {
        return Err(Error::Degenerate("response has zero range".into()));
    }
    let x1 = with_intercept(x);
    let alpha = plan.miscoverage;
    let empty = vec![0.0; n];
    let mut repeats: Vec<RepeatForecast> = (0..plan.repeats)
        .map(|_| RepeatForecast {
            lower_raw: empty.clone(),
            upper_raw: empty.clone(),
            median: empty.clone(),
            lower: empty.clone(),
            upper: empty.clone(),
        })
        .collect();
    let mut adjustments = Vec::new();
    for split in cv_splits(n, plan) {
        let order = seed::permutation(split.train.len(), seed::derive(plan.seed, "select-calibration", split.index as u64));
        let m = split.train.len() / 2;
        let rank = ((1.0 - alpha) * (m as f64 + 1.0)).ceil() as usize;
        let fit_rows: Vec<usize> = order[m..].iter().map(|&k| split.train[k]).collect();
        if m == 0 || rank > m || fit_rows.len() < p + 3 {
            return Err(Error::Config(format!(
                "fold too small for a calibration split: {} training rows, {} calibration rows at miscoverage {alpha}",
                split.train.len(),
                m
            )));
        }
        let cal_rows: Vec<usize> = order[..m].iter().map(|&k| split.train[k]).collect();
        let xf = linalg::rows(&x1, &fit_rows);
        let yf = DVector::from_iterator(fit_rows.len(), fit_rows.iter().map(|&i| y[i]));
        let b_lo = fit_quantile(&xf, &yf, FORECAST_LEVELS[0], plan.qr_penalty)?;
        let b_hi = fit_quantile(&xf, &yf, FORECAST_LEVELS[2], plan.qr_penalty)?;
        let b_med = fit_linear(&xf, &yf, plan.ridge_penalty)?;
        let predict = |b: &DVector<f64>, i: usize| x1.row(i).transpose().dot(b);
        let mut scores: Vec<f64> = cal_rows.iter().map(|&i| (predict(&b_lo, i) - y[i]).max(y[i] - predict(&b_hi, i))).collect();
        scores.sort_by(f64::total_cmp);
        let q = scores[rank - 1];
        adjustments.push(q);
        let rf = &mut repeats[split.repeat];
        for &i in &split.test {
            let (lo, hi, med) = (predict(&b_lo, i), predict(&b_hi, i), predict(&b_med, i));
            rf.lower_raw[i] = lo;
            rf.upper_raw[i] = hi;
            rf.median[i] = med;
            rf.lower[i] = (lo - q).min(med);
            rf.upper[i] = (hi + q).max(med);
        }
    }
    let total = (n * plan.repeats) as f64;
    let covered = repeats.iter().flat_map(|rf| (0..n).filter(move |&i| rf.lower[i] <= y[i] && y[i] <= rf.upper[i])).count() as f64;
    let width: f64 = repeats.iter().flat_map(|rf| rf.upper.iter().zip(&rf.lower).map(|(u, l)| u - l)).sum();
    Ok(IntervalBundle { repeats, adjustments, picp: covered / total, nmpil: width / total / (y_max - y_min) })
}

/// Mean over the forecast levels of the model pinball relative to the
/// pinball of the unconditional sample quantile.
pub fn criterion_pinball(bundle: &IntervalBundle, y: &DVector<f64>) -> Result<f64> {
    if bundle.repeats.is_empty() {
        return Err(Error::Config("empty interval bundle".into()));
    }
    let ys = y.as_slice();
    let mut total = 0.0;
    for (level, &tau) in FORECAST_LEVELS.iter().enumerate() {
        let q = stats::pinball_minimiser(ys, tau);
        let null: f64 = ys.iter().map(|v| stats::pinball(v - q, tau)).sum();
        if !(null > 0.0) {
            return Err(Error::Degenerate(format!("null pinball at τ = {tau} is zero")));
        }
        let model: f64 = bundle
            .repeats
            .iter()
            .map(|rf| ys.iter().zip(rf.at_level(level)).map(|(v, f)| stats::pinball(v - f, tau)).sum::<f64>())
            .sum::<f64>()
            / bundle.repeats.len() as f64;
        total += model / null;
    }
    Ok(total / FORECAST_LEVELS.len() as f64)
}

/// Maximal information complexity `C₁` of a covariance matrix.
pub fn complexity_c1(sigma: &DMatrix<f64>) -> Result<f64> {
    let s = sigma.nrows();
    let mut sym = sigma.clone();
    linalg::symmetrize(&mut sym);
    let eig = sym.symmetric_eigenvalues();
    if eig.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Singular("coefficient covariance is not positive definite".into()));
    }
    let sf = s as f64;
    Ok(0.5 * sf * (eig.sum() / sf).ln() - 0.5 * eig.iter().map(|v| v.ln()).sum::<f64>())
}

/// `n·ln σ̂² + 2·C₁(σ̂²(XᵀX + λI)⁻¹)` with a MAD residual scale.
pub fn criterion_ricomp(x: &DMatrix<f64>, y: &DVector<f64>, ridge_penalty: f64) -> Result<f64> {
    let (n, s) = x.shape();
    if s == 0 {
        return Err(Error::Config("RICOMP needs at least one column".into()));
    }
    let beta = fit_linear(x, y, ridge_penalty)?;
    let resid = y - x * &beta;
    let scale = stats::mad(resid.as_slice());
    let var = (scale * scale).max(f64::MIN_POSITIVE);
    let mut gram = x.transpose() * x;
    for j in 0..s {
        gram[(j, j)] += 2.0 * n as f64 * ridge_penalty;
    }
    let inv = linalg::cholesky_jittered(&gram)?.0.inverse();
    let c1 = complexity_c1(&(inv * var))?;
    Ok(n as f64 * var.ln() + 2.0 * c1)
}

/// `‖σ̂‖₁ / ‖β̂‖₁` of the median RIF regression (intercept excluded).
pub fn criterion_uncertainty(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let fit = fit_rif(&with_intercept(x), y, 0.5)?;
    let beta: f64 = fit.coefficients.iter().skip(1).map(|b| b.abs()).sum();
    if !(beta > 0.0) {
        return Err(Error::Degenerate("RIF coefficients are all zero".into()));
    }
    Ok(fit.std_errors.iter().skip(1).sum::<f64>() / beta)
}

/// CORP-style score decomposition of a quantile forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MurphyEhm {
    /// Mean pinball of the raw forecast.
    pub score: f64,
    pub mcb: f64,
    pub dsc: f64,
    pub unc: f64,
}

struct Block {
    values: Vec<f64>,
    fitted: f64,
    len: usize,
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Isotonic (non-decreasing in `x`) τ-quantile regression of `y` by
/// pool-adjacent-violators; tied `x` share one fitted value.
pub fn isotonic_quantile(x: &[f64], y: &[f64], tau: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut stack: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let j = i + order[i..].iter().take_while(|&&k| x[k] == x[order[i]]).count();
        let mut values: Vec<f64> = order[i..j].iter().map(|&k| y[k]).collect();
        values.sort_by(f64::total_cmp);
        let mut block = Block { fitted: stats::pinball_minimiser(&values, tau), len: j - i, values };
        while let Some(prev) = stack.last() {
            if prev.fitted <= block.fitted {
                break;
            }
            let prev = stack.pop().expect("non-empty stack");
            let values = merge_sorted(&prev.values, &block.values);
            block = Block { fitted: stats::pinball_minimiser(&values, tau), len: prev.len + block.len, values };
        }
        stack.push(block);
        i = j;
    }
    let mut fitted = vec![0.0; x.len()];
    let mut pos = 0;
    for block in &stack {
        for &k in &order[pos..pos + block.len] {
            fitted[k] = block.fitted;
        }
        pos += block.len;
    }
    fitted
}

/// `S̄ = MCB − DSC + UNC` via isotonic recalibration.
pub fn murphy_ehm(predictions: &[f64], y: &[f64], tau: f64) -> Result<MurphyEhm> {
    if predictions.len() != y.len() {
        return Err(Error::Config("predictions and responses differ in length".into()));
    }
    if y.len() < MIN_MURPHY_POINTS {
        return Err(Error::Degenerate(format!("decomposition needs ≥ {MIN_MURPHY_POINTS} points, got {}", y.len())));
    }
    let mean_loss = |f: &mut dyn Iterator<Item = f64>| -> f64 {
        y.iter().zip(f).map(|(v, p)| stats::pinball(v - p, tau)).sum::<f64>() / y.len() as f64
    };
    let score = mean_loss(&mut predictions.iter().copied());
    let recal = isotonic_quantile(predictions, y, tau);
    let recal_score = mean_loss(&mut recal.into_iter());
    let q = stats::pinball_minimiser(y, tau);
    let unc = mean_loss(&mut std::iter::repeat(q));
    Ok(MurphyEhm { score, mcb: score - recal_score, dsc: unc - recal_score, unc })
}

/// Coverage-width criterion `NMPIL / sigmoid(η(PICP − μ))`.
pub fn cwc(picp: f64, nmpil: f64, mu: f64, eta: f64) -> f64 {
    if nmpil == 0.0 {
        return 0.0;
    }
    nmpil / stats::sigmoid(eta * (picp - mu))
}

pub const CWC_MU: f64 = 0.85;
pub const CWC_ETA: f64 = 200.0;
