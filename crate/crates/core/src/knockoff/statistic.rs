//! Antisymmetric feature statistics `W_j = Z_j − Z_{p+j}` on `[X, X̃]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::SparseFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// Mean absolute SHAP value of a linear model.
    ShapDs,
    /// Loss after swapping each column with its partner.
    Swap,
    /// Trapezoid-integrated loss along the interpolation path to the partner.
    SwapInt,
}

/// Interpolation weights used by [`StatisticKind::SwapInt`] (baseline 0).
pub const SWAP_INT_GRID: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

/// Compute `W` (length p) from a linear fit on the n×2p augmented design.
pub fn feature_statistic(x_aug: &DMatrix<f64>, y: &DVector<f64>, fit: &SparseFit, kind: StatisticKind) -> Result<Vec<f64>> {
    let (n, two_p) = x_aug.shape();
    if two_p % 2 != 0 || fit.coefficients.len() != two_p || y.len() != n {
        return Err(Error::Config(format!(
            "statistic needs an even-width design matching the fit: {n}×{two_p}, {} coefficients, {} responses",
            fit.coefficients.len(),
            y.len()
        )));
    }
    let p = two_p / 2;
    let z = match kind {
        StatisticKind::ShapDs => shap_importance(x_aug, &fit.coefficients),
        StatisticKind::Swap => swap_losses(x_aug, y, fit),
        StatisticKind::SwapInt => swap_int_losses(x_aug, y, fit),
    };
    Ok((0..p).map(|j| z[j] - z[p + j]).collect())
}

fn partner(j: usize, p: usize) -> usize {
    if j < p {
        j + p
    } else {
        j - p
    }
}

/// `|β_j|·mean|X_ij − X̄_j|`: exact mean |SHAP| of a linear model with
/// interventional baseline at the column means.
pub fn shap_importance(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    x.column_iter()
        .zip(beta)
        .map(|(col, b)| {
            if *b == 0.0 {
                return 0.0;
            }
            let m = col.mean();
            b.abs() * col.iter().map(|v| (v - m).abs()).sum::<f64>() / col.len() as f64
        })
        .collect()
}

fn mse(pred: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (y - pred).norm_squared() / y.len() as f64
}

/// Swap loss, evaluated literally: copy the augmented design, overwrite the
/// column with its partner and predict. Cost O(n·p²).
fn swap_losses(x: &DMatrix<f64>, y: &DVector<f64>, fit: &SparseFit) -> Vec<f64> {
    let two_p = x.ncols();
    let p = two_p / 2;
    (0..two_p)
        .map(|j| {
            let mut swapped = x.clone();
            swapped.set_column(j, &x.column(partner(j, p)));
            mse(&fit.predict(&swapped), y)
        })
        .collect()
}

/// Trapezoid integral of the loss along `X_j + λ(X_σ(j) − X_j)`.
fn swap_int_losses(x: &DMatrix<f64>, y: &DVector<f64>, fit: &SparseFit) -> Vec<f64> {
    let two_p = x.ncols();
    let p = two_p / 2;
    let base = fit.predict(x);
    let base_loss = mse(&base, y);
    (0..two_p)
        .map(|j| {
            let b = fit.coefficients[j];
            let direction = (x.column(partner(j, p)) - x.column(j)) * b;
            let mut prev = (0.0, base_loss);
            let mut total = 0.0;
            for &lambda in &SWAP_INT_GRID {
                let loss = if b == 0.0 { base_loss } else { mse(&(&base + &direction * lambda), y) };
                total += 0.5 * (lambda - prev.0) * (prev.1 + loss);
                prev = (lambda, loss);
            }
            total
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn fit_with(beta: Vec<f64>, intercept: f64) -> SparseFit {
        let support = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        SparseFit { coefficients: beta, support, intercept, ridge_penalty: 0.0, cv_score: 0.0 }
    }

    #[test]
    fn shap_hand_example() {
        // β = (2, 0), first column (1, 3): mean |x − x̄| = 1, so Z₁ = 2.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 7.0]);
        let z = shap_importance(&x, &[2.0, 0.0]);
        assert_eq!(z, vec![2.0, 0.0]);
    }

    #[test]
    fn swap_matches_closed_form_for_linear_model() {
        let mut rng = seed::rng(3);
        let (n, p) = (40, 3);
        let x = DMatrix::<f64>::from_fn(n, 2 * p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 1.5 - x[(i, 2)]);
        let fit = fit_with(vec![1.4, 0.0, -0.9, 0.2, 0.0, 0.1], 0.3);
        let z = swap_losses(&x, &y, &fit);
        // Swapping column j changes the prediction by β_j(X_σ(j) − X_j).
        let base = fit.predict(&x);
        for (j, zj) in z.iter().enumerate() {
            let shift = (x.column(partner(j, p)) - x.column(j)) * fit.coefficients[j];
            let expect = (&y - &base - shift).norm_squared() / n as f64;
            assert!((zj - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_int_is_trapezoid_of_quadratic_path() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0, 2.0]);
        let fit = fit_with(vec![1.0, 0.0], 0.0);
        let z = swap_int_losses(&x, &y, &fit);
        // Residual along the path is −λ(X₂ − X₁); loss(λ) = λ²·‖X₂ − X₁‖²/n = λ².
        let exact: f64 = SWAP_INT_GRID
            .iter()
            .scan(0.0, |prev, &l| {
                let area = 0.5 * (l - *prev) * (*prev * *prev + l * l);
                *prev = l;
                Some(area)
            })
            .sum();
        assert!((z[0] - exact).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
    }

    fn flip_case(n: usize, p: usize, seed_: u64) -> (DMatrix<f64>, DVector<f64>, SparseFit) {
        let mut rng = seed::rng(seed_);
        let x = DMatrix::<f64>::from_fn(n, 2 * p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let beta: Vec<f64> = (0..2 * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        (x, y, fit_with(beta, 0.2))
    }

    proptest! {
        #[test]
        fn swapping_a_pair_flips_its_sign(seed_ in 0u64..1000, p in 1usize..5, j in 0usize..5) {
            let j = j % p;
            let (x, y, fit) = flip_case(25, p, seed_);
            let mut xs = x.clone();
            xs.swap_columns(j, j + p);
            let mut fs = fit.clone();
            fs.coefficients.swap(j, j + p);
            for kind in [StatisticKind::ShapDs, StatisticKind::Swap, StatisticKind::SwapInt] {
                let w = feature_statistic(&x, &y, &fit, kind).unwrap();
                let ws = feature_statistic(&xs, &y, &fs, kind).unwrap();
                for k in 0..p {
                    let expect = if k == j { -w[k] } else { w[k] };
                    prop_assert!((ws[k] - expect).abs() <= 1e-9 * (1.0 + w[k].abs()), "{kind:?} k={k}");
                }
            }
        }
    }
}
