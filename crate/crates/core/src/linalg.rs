//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Factorise a symmetric matrix, adding `eps·trace/p·I` with `eps` doubling
/// from 1e-10 until the Cholesky factorisation succeeds.
///
/// Returns the factor and the jitter that was added (0 when none was needed).
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let p = a.nrows().max(1) as f64;
    let scale = a.trace() / p;
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let mut eps = 1e-10;
    while eps < 1e6 {
        let jitter = eps * scale;
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(b) {
            return Ok((c, jitter));
        }
        eps *= 2.0;
    }
    Err(Error::Singular(format!("matrix of order {} is not factorisable even after jitter", a.nrows())))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Replace `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Lift the spectrum so that the smallest eigenvalue is at least
/// `rel·trace/p`. Returns the amount added to the diagonal.
pub fn floor_spectrum(a: &mut DMatrix<f64>, rel: f64) -> f64 {
    let p = a.nrows().max(1) as f64;
    let floor = rel * (a.trace() / p).abs().max(f64::MIN_POSITIVE);
    let lmin = min_eigenvalue(a);
    if lmin >= floor {
        return 0.0;
    }
    // Small safety margin against rounding in the eigen-solver.
    let add = (floor - lmin) * (1.0 + 1e-6);
    for i in 0..a.nrows() {
        a[(i, i)] += add;
    }
    add
}

/// Solve `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Cholesky::new(a.clone())
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::Singular(format!("order-{} system is not positive definite", a.nrows())))
}

/// Sub-matrix of `a` on the index set `idx` (rows and columns).
pub fn principal(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Entries of `v` on `idx`.
pub fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Columns `idx` of `x`.
pub fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &x.column(j));
    }
    out
}

/// Rows `idx` of `x`.
pub fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}
