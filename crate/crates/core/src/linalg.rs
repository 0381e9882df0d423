//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Matrix norms are operator (spectral) norms throughout; the bound
//! certificates are stated in that norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalue slack used for every PSD / Loewner-order decision.
pub const PSD_TOL: f64 = 1e-10;

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn vector_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = sym_part(m);
    s.symmetric_eigen().eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = sym_part(m);
    s.symmetric_eigen().eigenvalues.max()
}

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Max-abs entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `lower ⪯ upper` in the Loewner order, with [`PSD_TOL`] slack.
pub fn loewner_le(lower: &DMatrix<f64>, upper: &DMatrix<f64>) -> bool {
    min_eigenvalue(&(upper - lower)) >= -PSD_TOL
}

/// Inverse of `I + s` for symmetric PSD `s`. Aborts when the smallest
/// eigenvalue of `I + s` drops below one half.
pub fn inv_identity_plus(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let m = DMatrix::identity(n, n) + s;
    let floor = min_eigenvalue(&m);
    if floor < 0.5 {
        return Err(Error::Numerical(format!("I + sigma has eigenvalue {floor:.3e} < 0.5")));
    }
    invert(&m)
}

pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv =
        m.clone().lu().try_inverse().ok_or_else(|| Error::Numerical("singular matrix in inversion".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite inverse".into()));
    }
    if m.nrows() == m.ncols() && asymmetry(m) == 0.0 {
        symmetrize(&mut inv);
    }
    Ok(inv)
}

/// Cubic Hermite interpolation on `[t0, t1]` applied entry-wise.
pub fn hermite_into(t0: f64, t1: f64, y0: &[f64], y1: &[f64], d0: &[f64], d1: &[f64], t: f64, out: &mut [f64]) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Shape(format!(
            "{what}: expected {nrows}x{ncols}, got {}x{}",
            rows.len(),
            rows.first().map_or(0, |r| r.len())
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert_relative_eq!(spectral_norm(&m), 4.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| 2.0 * t * t * t - t + 0.5;
        let df = |t: f64| 6.0 * t * t - 1.0;
        let mut out = [0.0];
        hermite_into(0.3, 0.7, &[f(0.3)], &[f(0.7)], &[df(0.3)], &[df(0.7)], 0.41, &mut out);
        assert_relative_eq!(out[0], f(0.41), epsilon = 1e-13);
    }

    #[test]
    fn loewner_order_with_slack() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        assert!(loewner_le(&a, &b));
        assert!(!loewner_le(&b, &a));
    }

    #[test]
    fn rejects_small_identity_shift() {
        let s = DMatrix::from_row_slice(1, 1, &[-0.6]);
        assert!(inv_identity_plus(&s).is_err());
    }
}
