//! Self-adjoint operators in spectral form and the Hilbert scale they generate.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64};

/// Distance to the spectrum below which a resolvent is refused.
pub const SPECTRUM_GAP: f64 = 1e-14;
const UNITARY_TOL: f64 = 1e-12;

/// Self-adjoint `H = U diag(λ) U†`.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    eigenbasis: CMat,
    diagonal: bool,
}

impl SpectralOperator {
    pub fn new(eigenvalues: Vec<f64>, eigenbasis: CMat) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty spectrum".into()));
        }
        linalg::check_square("eigenbasis", &eigenbasis, n)?;
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite eigenvalue".into()));
        }
        let residual = linalg::op_norm(&(eigenbasis.adjoint() * &eigenbasis - linalg::identity(n)));
        if residual > UNITARY_TOL {
            return Err(Error::NotUnitary { residual });
        }
        let diagonal = eigenbasis == linalg::identity(n);
        Ok(Self { eigenvalues, eigenbasis, diagonal })
    }

    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        Self::new(eigenvalues.to_vec(), linalg::identity(eigenvalues.len()))
    }

    /// Diagonalizes a Hermitian matrix. Rejects matrices with ‖H − H†‖ > 1e-12·max(1, ‖H‖).
    pub fn from_hermitian(h: &CMat) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch("H must be square".into()));
        }
        let residual = linalg::hermitian_residual(h);
        if residual > 1e-12 * linalg::op_norm(h).max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        let (values, vectors) = linalg::hermitian_eigen(h);
        Self::new(values, vectors)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenbasis(&self) -> &CMat {
        &self.eigenbasis
    }

    /// True when the eigenbasis is the coordinate basis.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `f(H) = U diag(f(λ)) U†`.
    pub fn functional<F: Fn(f64) -> C64>(&self, f: F) -> CMat {
        let n = self.dim();
        if self.diagonal {
            return CMat::from_diagonal(&CVec::from_iterator(n, self.eigenvalues.iter().map(|&l| f(l))));
        }
        let u = &self.eigenbasis;
        let mut scaled = u.clone();
        for j in 0..n {
            let w = f(self.eigenvalues[j]);
            scaled.column_mut(j).iter_mut().for_each(|v| *v *= w);
        }
        scaled * u.adjoint()
    }

    pub fn matrix(&self) -> CMat {
        self.functional(|l| c(l, 0.0))
    }

    pub fn spectral_gap(&self, z: C64) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &l| m.min((z - l).norm()))
    }

    /// Distance from z to the spectrum, erroring when it is below [`SPECTRUM_GAP`].
    pub fn check_off_spectrum(&self, z: C64) -> Result<f64> {
        let gap = self.spectral_gap(z);
        if gap < SPECTRUM_GAP {
            return Err(Error::SpectrumHit { z, gap });
        }
        Ok(gap)
    }

    /// `R_z = (−H + z)^{-1}`.
    pub fn resolvent(&self, z: C64) -> Result<CMat> {
        self.check_off_spectrum(z)?;
        Ok(self.functional(|l| (z - l).inv()))
    }

    /// `W_s = (H² + 1)^{s/2}`.
    pub fn weight(&self, s: f64) -> CMat {
        let w = ScaleWeight::new(s);
        self.functional(|l| c(w.factor(l), 0.0))
    }

    /// λ₀ = 0 when 0 is at least 1e-6 away from the spectrum, else min(spectrum) − 1.
    pub fn default_lambda0(&self) -> f64 {
        if self.spectral_gap(c(0.0, 0.0)) >= 1e-6 {
            0.0
        } else {
            self.min_eigenvalue() - 1.0
        }
    }

    /// Scale inner product ⟨a, b⟩_s = ⟨W_s a, W_s b⟩.
    pub fn scale_inner(&self, a: &CVec, b: &CVec, s: f64) -> C64 {
        let w = self.weight(s);
        (&w * a).dotc(&(&w * b))
    }
}

/// Weight factor of the scale space 𝔥_s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWeight {
    pub s: f64,
}

impl ScaleWeight {
    pub fn new(s: f64) -> Self {
        Self { s }
    }

    pub fn factor(&self, lambda: f64) -> f64 {
        (lambda * lambda + 1.0).powf(self.s / 2.0)
    }
}

/// Bounded map Σ: 𝔥₁ → 𝔛 stored as a target_dim × dim matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeMap {
    matrix: CMat,
}

impl ChargeMap {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput("charge map needs target_dim >= 1 and dim >= 1".into()));
        }
        if !linalg::all_finite(&matrix) {
            return Err(Error::InvalidInput("charge map has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn zero(target_dim: usize, dim: usize) -> Self {
        Self { matrix: CMat::zeros(target_dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: linalg::identity(dim) }
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Σ*: 𝔛 → 𝔥₋₁ in shared coordinates (the conjugate transpose).
    pub fn star(&self) -> CMat {
        self.matrix.adjoint()
    }

    /// ‖Σ‖ as a map 𝔥_s → 𝔛.
    pub fn norm_from(&self, h: &SpectralOperator, s: f64) -> Result<f64> {
        scale_norm(&self.matrix, h, s, None, 0.0)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { matrix: &self.matrix * factor }
    }
}

/// ‖W_t · Op · W_s^{-1}‖₂ with W built from `h` on the domain and from `target` on the codomain.
/// A `None` target is the charge space 𝔛 with identity weighting.
pub fn scale_norm(
    op: &CMat,
    h: &SpectralOperator,
    s: f64,
    target: Option<&SpectralOperator>,
    t: f64,
) -> Result<f64> {
    if op.ncols() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} columns, H has dim {}",
            op.ncols(),
            h.dim()
        )));
    }
    let right = h.weight(-s);
    let weighted = match target {
        Some(k) => {
            if op.nrows() != k.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "operator has {} rows, target has dim {}",
                    op.nrows(),
                    k.dim()
                )));
            }
            k.weight(t) * op * right
        }
        None => op * right,
    };
    Ok(linalg::op_norm(&weighted))
}

/// ‖R_z − R_w − (w − z) R_z R_w‖.
pub fn first_resolvent_check(h: &SpectralOperator, z: C64, w: C64) -> Result<f64> {
    let rz = h.resolvent(z)?;
    let rw = h.resolvent(w)?;
    let lhs = &rz - &rw;
    let rhs = (&rz * &rw) * (w - z);
    Ok(linalg::op_norm(&(lhs - rhs)))
}
