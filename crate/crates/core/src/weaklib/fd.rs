//! Grid derivatives: Fourier differentiation on periodic axes, Fornberg
//! finite differences elsewhere.

use std::collections::HashMap;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Fornberg weights for the `order`-th derivative at offset 0 using nodes at
/// the integer `offsets` (unit spacing).
pub fn fornberg(offsets: &[f64], order: usize) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Stencil radius giving at least fourth-order accuracy for derivative `order`.
fn radius(order: usize) -> usize {
    (order + 4).div_ceil(2)
}

/// `order`-th derivative of a row-major tensor along `axis` with grid step `h`.
/// Periodic axes wrap; others use shifted one-sided stencils near the edges.
pub fn derivative(values: &[f64], shape: &[usize], axis: usize, order: usize, h: f64, periodic: bool) -> Vec<f64> {
    if order == 0 {
        return values.to_vec();
    }
    let n = shape[axis];
    let r = radius(order).min((n - 1) / 2);
    let width = 2 * r + 1;
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let scale = h.powi(-(order as i32));
    // Stencils keyed by the first node's offset relative to the target point.
    let mut cache: HashMap<isize, Vec<f64>> = HashMap::new();
    let mut stencil = |start: isize| -> Vec<f64> {
        cache
            .entry(start)
            .or_insert_with(|| {
                let offs: Vec<f64> = (0..width).map(|w| (start + w as isize) as f64).collect();
                fornberg(&offs, order).into_iter().map(|c| c * scale).collect()
            })
            .clone()
    };
    let mut out = vec![0.0; values.len()];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * n * stride + inner;
            for i in 0..n {
                let mut start = -(r as isize);
                if !periodic {
                    let lo = i as isize + start;
                    if lo < 0 {
                        start -= lo;
                    }
                    let hi = i as isize + start + width as isize - 1;
                    if hi > n as isize - 1 {
                        start -= hi - (n as isize - 1);
                    }
                }
                let w = stencil(start);
                let mut acc = 0.0;
                for (k, c) in w.iter().enumerate() {
                    let j = (i as isize + start + k as isize).rem_euclid(n as isize) as usize;
                    acc += c * values[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

/// `order`-th Fourier derivative along a periodic `axis` whose period is
/// `n·h`. The Nyquist mode is dropped for odd orders.
pub fn spectral_derivative(values: &[f64], shape: &[usize], axis: usize, order: usize, h: f64) -> Vec<f64> {
    if order == 0 {
        return values.to_vec();
    }
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let base_k = 2.0 * std::f64::consts::PI / (n as f64 * h);
    let multiplier: Vec<Complex64> = (0..n)
        .map(|j| {
            let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            if n.is_multiple_of(2) && j == n / 2 && order % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::new(0.0, signed * base_k).powu(order as u32) / n as f64
        })
        .collect();
    let mut out = vec![0.0; values.len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * n * stride + inner;
            for (i, l) in line.iter_mut().enumerate() {
                *l = Complex64::new(values[base + i * stride], 0.0);
            }
            fwd.process(&mut line);
            for (l, m) in line.iter_mut().zip(&multiplier) {
                *l *= m;
            }
            inv.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                out[base + i * stride] = l.re;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_central_second_derivative() {
        let w = fornberg(&[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = fornberg(&[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_of_smooth_functions() {
        let n = 120;
        let h = 0.05;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        for order in 1..=6 {
            let d = derivative(&f, &[n], 0, order, h, false);
            for (i, x) in xs.iter().enumerate() {
                let exact = match order % 4 {
                    1 => x.cos(),
                    2 => -x.sin(),
                    3 => -x.cos(),
                    _ => x.sin(),
                };
                assert!((d[i] - exact).abs() < 2e-3, "order {order} at {i}: {} vs {exact}", d[i]);
            }
        }
    }

    #[test]
    fn spectral_derivatives_are_exact_for_trigonometric_data() {
        let (n, nt) = (64, 3);
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut v = vec![0.0; n * nt];
        for i in 0..n {
            for t in 0..nt {
                v[i * nt + t] = (3.0 * i as f64 * h).sin() * (t as f64 + 1.0);
            }
        }
        for order in 1..=6 {
            let d = spectral_derivative(&v, &[n, nt], 0, order, h);
            for i in 0..n {
                let x = i as f64 * h;
                let exact = 3f64.powi(order as i32) * (3.0 * x + order as f64 * std::f64::consts::FRAC_PI_2).sin();
                for t in 0..nt {
                    assert!((d[i * nt + t] - exact * (t as f64 + 1.0)).abs() < 1e-8 * 3f64.powi(order as i32));
                }
            }
        }
    }
}
