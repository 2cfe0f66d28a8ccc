//! Dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Condition number ceiling for inverses that define membership tests.
pub const COND_LIMIT: f64 = 1e12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

pub fn cond(m: &CMat) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number measured against `reference`, the norm scale of the terms that were
/// summed to form `m`; cancellation down to rounding noise then reads as singular.
pub fn cond_against(m: &CMat, reference: f64) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(reference, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Like [`inverse_checked`] with the condition number taken by [`cond_against`].
pub fn inverse_checked_against(m: &CMat, reference: f64, limit: f64) -> std::result::Result<CMat, f64> {
    if m.nrows() != m.ncols() {
        return Err(f64::INFINITY);
    }
    let k = cond_against(m, reference);
    if !(k < limit) {
        return Err(k);
    }
    m.clone().lu().try_inverse().ok_or(f64::INFINITY)
}

/// Inverse of a square matrix, refused when the condition number reaches `limit`.
/// On refusal the measured condition number is returned.
pub fn inverse_checked(m: &CMat, limit: f64) -> std::result::Result<CMat, f64> {
    if m.nrows() != m.ncols() {
        return Err(f64::INFINITY);
    }
    if m.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let k = cond(m);
    if !(k < limit) {
        return Err(k);
    }
    m.clone().lu().try_inverse().ok_or(f64::INFINITY)
}

pub fn hermitian_residual(m: &CMat) -> f64 {
    op_norm(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(f64::NAN)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Least-squares solve `a x = b`, refused when cond(a) exceeds `limit`.
pub fn lstsq(a: &CMat, b: &CMat, limit: f64) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "lstsq: {} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let k = cond(a);
    if !(k <= limit) {
        return Err(Error::DecompositionIllConditioned { cond: k });
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-14;
    svd.solve(b, eps)
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn diag_real(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&v| c(v, 0.0))))
}

pub fn scalar(m: usize, value: C64) -> CMat {
    CMat::identity(m, m) * value
}

pub fn check_square(name: &str, m: &CMat, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name}: expected {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}
