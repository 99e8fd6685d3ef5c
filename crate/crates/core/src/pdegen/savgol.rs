//! Savitzky–Golay filtering along tensor axes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Convolution weights of a centred Savitzky–Golay filter estimating the
/// `deriv`-th derivative (in units of grid steps).
pub fn coefficients(window: usize, polyorder: usize, deriv: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) || window == 0 {
        return Err(Error::Config(format!("window must be odd, got {window}")));
    }
    if polyorder >= window {
        return Err(Error::Config(format!("polyorder {polyorder} must be smaller than window {window}")));
    }
    if deriv > polyorder {
        return Err(Error::Config(format!("derivative {deriv} exceeds polyorder {polyorder}")));
    }
    let half = (window / 2) as f64;
    let scale = half.max(1.0);
    // Scaled abscissae keep the Vandermonde system well conditioned.
    let vander = DMatrix::from_fn(window, polyorder + 1, |i, j| ((i as f64 - half) / scale).powi(j as i32));
    let pinv = vander.pseudo_inverse(1e-13).map_err(|e| Error::Singular(format!("Savitzky–Golay design: {e}")))?;
    let fact: f64 = (1..=deriv).map(|v| v as f64).product();
    let unit = fact / scale.powi(deriv as i32);
    Ok((0..window).map(|i| pinv[(deriv, i)] * unit).collect())
}

/// Mirror (reflect without repeating the edge) an out-of-range index.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut r = i.rem_euclid(period);
    if r >= n {
        r = period - r;
    }
    r as usize
}

/// Apply a centred stencil along `axis` of a row-major tensor of `shape`.
pub fn filter_axis(values: &[f64], shape: &[usize], axis: usize, weights: &[f64]) -> Vec<f64> {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let half = (weights.len() / 2) as isize;
    let mut out = vec![0.0; values.len()];
    let mut line = vec![0.0; n];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * n * stride + inner;
            for (i, l) in line.iter_mut().enumerate() {
                *l = values[base + i * stride];
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (w, &c) in weights.iter().enumerate() {
                    let src = mirror(i as isize + w as isize - half, n);
                    acc += c * line[src];
                }
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_weights_sum_to_one() {
        let c = coefficients(7, 3, 0).unwrap();
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Classic 5-point quadratic filter.
        let c = coefficients(5, 2, 0).unwrap();
        let classic = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in c.iter().zip(classic) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_weights_differentiate_polynomials() {
        let c = coefficients(9, 4, 2).unwrap();
        // f(z) = z² has second derivative 2 everywhere.
        let f: Vec<f64> = (-4..=4).map(|z| (z * z) as f64).collect();
        let d2: f64 = c.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((d2 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn mirror_indices() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(-2, 5), 2);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(6, 5), 2);
        assert_eq!(mirror(2, 5), 2);
    }

    #[test]
    fn invalid_windows_are_config_errors() {
        assert!(matches!(coefficients(4, 2, 0), Err(Error::Config(_))));
        assert!(matches!(coefficients(5, 5, 0), Err(Error::Config(_))));
    }
}
