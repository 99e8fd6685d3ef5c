//! Fourier pseudo-spectral ETDRK4 integrator for `u_t = L u + N(u)` on a
//! periodic 1D grid, with `N(u) = g·∂x(u²)`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Number of contour points used to evaluate the ETD coefficients.
const CONTOUR: usize = 64;

pub(crate) struct Etdrk4 {
    n: usize,
    wavenumbers: Vec<f64>,
    dealias: Vec<bool>,
    nonlinear: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Etdrk4 {
    /// `symbol(k)` is the Fourier symbol of the linear operator; the
    /// nonlinear term is `nonlinear·∂x(u²)`.
    pub fn new(n: usize, period: f64, dt: f64, symbol: impl Fn(f64) -> Complex64, nonlinear: f64) -> Self {
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                // The Nyquist mode carries no odd derivative information.
                let m = if n.is_multiple_of(2) && j == n / 2 { 0.0 } else { m };
                2.0 * std::f64::consts::PI * m / period
            })
            .collect();
        let kmax = wavenumbers.iter().fold(0.0f64, |a, k| a.max(k.abs()));
        let dealias = wavenumbers.iter().map(|k| k.abs() <= 2.0 / 3.0 * kmax + 1e-12).collect();

        let roots: Vec<Complex64> =
            (0..CONTOUR).map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR as f64)).collect();
        let mut e = Vec::with_capacity(n);
        let mut e2 = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        let mut f3 = Vec::with_capacity(n);
        for &k in &wavenumbers {
            let l = symbol(k) * dt;
            e.push(l.exp());
            e2.push((l / 2.0).exp());
            let (mut sq, mut s1, mut s2, mut s3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let z = l + r;
                let ez = z.exp();
                let z3 = z * z * z;
                sq += ((z / 2.0).exp() - 1.0) / z;
                s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                s2 += (2.0 + z + ez * (z - 2.0)) / z3;
                s3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            let m = CONTOUR as f64;
            q.push(sq * dt / m);
            f1.push(s1 * dt / m);
            f2.push(s2 * dt / m);
            f3.push(s3 * dt / m);
        }
        let mut planner = FftPlanner::new();
        Etdrk4 {
            n,
            wavenumbers,
            dealias,
            nonlinear,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn to_spectral(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn to_physical(&self, v: &[Complex64]) -> Vec<f64> {
        let mut buf = v.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn nonlinear_term(&self, v: &[Complex64]) -> Vec<Complex64> {
        let u = self.to_physical(v);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let mut w = self.to_spectral(&sq);
        for ((wj, &k), &keep) in w.iter_mut().zip(&self.wavenumbers).zip(&self.dealias) {
            *wj = if keep { *wj * Complex64::new(0.0, k * self.nonlinear) } else { Complex64::default() };
        }
        w
    }

    /// Advance the spectral state by one step.
    pub fn step(&self, v: &mut [Complex64]) {
        let nv = self.nonlinear_term(v);
        let a: Vec<Complex64> = (0..self.n).map(|j| self.e2[j] * v[j] + self.q[j] * nv[j]).collect();
        let na = self.nonlinear_term(&a);
        let b: Vec<Complex64> = (0..self.n).map(|j| self.e2[j] * v[j] + self.q[j] * na[j]).collect();
        let nb = self.nonlinear_term(&b);
        let c: Vec<Complex64> = (0..self.n).map(|j| self.e2[j] * a[j] + self.q[j] * (2.0 * nb[j] - nv[j])).collect();
        let nc = self.nonlinear_term(&c);
        for j in 0..self.n {
            v[j] = self.e[j] * v[j] + nv[j] * self.f1[j] + 2.0 * (na[j] + nb[j]) * self.f2[j] + nc[j] * self.f3[j];
        }
    }
}
