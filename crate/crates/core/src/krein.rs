//! Single-stage Kreĭn machinery: G_z, the Weyl function M_z and the resolvent formula.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64, COND_LIMIT};
use crate::scale::{ChargeMap, SpectralOperator};

/// Condition ceiling for the least-squares charge extraction.
pub const EXTRACTION_COND_LIMIT: f64 = 1e10;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParameterKind {
    SelfAdjoint,
    SymmetricOnly,
    Scalar,
}

/// The parameter Θ acting on the charge space 𝔛.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionParameter {
    theta: CMat,
    kind: ParameterKind,
}

impl ExtensionParameter {
    fn checked(theta: CMat, kind: ParameterKind) -> Result<Self> {
        if theta.nrows() != theta.ncols() || theta.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Theta must be square and nonempty, got {}x{}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        if !linalg::all_finite(&theta) {
            return Err(Error::InvalidInput("Theta has non-finite entries".into()));
        }
        let residual = linalg::hermitian_residual(&theta);
        if residual > HERMITIAN_TOL * linalg::op_norm(&theta).max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        // rounding-level asymmetry is projected away so that adjoint laws hold exactly
        Ok(Self { theta: linalg::hermitian_part(&theta), kind })
    }

    pub fn self_adjoint(theta: CMat) -> Result<Self> {
        Self::checked(theta, ParameterKind::SelfAdjoint)
    }

    /// Symmetric (not certified self-adjoint) parameter; at finite dimension still Hermitian.
    pub fn symmetric_only(theta: CMat) -> Result<Self> {
        Self::checked(theta, ParameterKind::SymmetricOnly)
    }

    pub fn scalar(value: f64, dim: usize) -> Self {
        Self { theta: linalg::scalar(dim, c(value, 0.0)), kind: ParameterKind::Scalar }
    }

    pub fn matrix(&self) -> &CMat {
        &self.theta
    }

    pub fn kind(&self) -> ParameterKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    /// Θ + Δ, keeping the kind unless a scalar stops being scalar.
    pub fn shifted(&self, delta: &CMat) -> Result<Self> {
        let kind = match self.kind {
            ParameterKind::Scalar => ParameterKind::SelfAdjoint,
            k => k,
        };
        Self::checked(&self.theta + delta, kind)
    }

    pub fn negated(&self) -> Self {
        Self { theta: -&self.theta, kind: self.kind }
    }
}

/// Cached (G_z, M_z).
#[derive(Debug, Clone)]
pub struct WeylPair {
    pub gz: CMat,
    pub mz: CMat,
}

type ZKey = (u64, u64);

fn zkey(z: C64) -> ZKey {
    // +0.0 and -0.0 share a key
    ((z.re + 0.0).to_bits(), (z.im + 0.0).to_bits())
}

/// (H, Σ, λ₀) with G = G_{λ₀} and a concurrent cache of (G_z, M_z).
#[derive(Debug)]
pub struct KreinFamily {
    h: SpectralOperator,
    sigma: ChargeMap,
    lambda0: f64,
    r0: CMat,
    g: CMat,
    cache: RwLock<HashMap<ZKey, Arc<WeylPair>>>,
}

impl Clone for KreinFamily {
    fn clone(&self) -> Self {
        Self {
            h: self.h.clone(),
            sigma: self.sigma.clone(),
            lambda0: self.lambda0,
            r0: self.r0.clone(),
            g: self.g.clone(),
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl KreinFamily {
    /// `lambda0 = None` applies [`SpectralOperator::default_lambda0`].
    pub fn new(h: SpectralOperator, sigma: ChargeMap, lambda0: Option<f64>) -> Result<Self> {
        if sigma.dim() != h.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Sigma acts on dim {}, H has dim {}",
                sigma.dim(),
                h.dim()
            )));
        }
        let lambda0 = lambda0.unwrap_or_else(|| h.default_lambda0());
        let r0 = h.resolvent(c(lambda0, 0.0))?;
        let g = &r0 * sigma.star();
        Ok(Self { h, sigma, lambda0, r0, g, cache: RwLock::new(HashMap::new()) })
    }

    pub fn h(&self) -> &SpectralOperator {
        &self.h
    }

    pub fn sigma(&self) -> &ChargeMap {
        &self.sigma
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// R = (−H + λ₀)^{-1}.
    pub fn r0(&self) -> &CMat {
        &self.r0
    }

    /// G = G_{λ₀}.
    pub fn g(&self) -> &CMat {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.sigma.target_dim()
    }

    /// Computes (G_z, M_z) from scratch, bypassing the cache.
    pub fn pair_uncached(&self, z: C64) -> Result<WeylPair> {
        let rzb = self.h.resolvent(z.conj())?;
        let gz = (self.sigma.matrix() * rzb).adjoint();
        let mz = self.sigma.matrix() * (&self.g - &gz);
        Ok(WeylPair { gz, mz })
    }

    pub fn pair(&self, z: C64) -> Result<Arc<WeylPair>> {
        let key = zkey(z);
        if let Some(p) = self.cache.read().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(p));
        }
        let fresh = Arc::new(self.pair_uncached(z)?);
        let mut w = self.cache.write().expect("cache poisoned");
        Ok(Arc::clone(w.entry(key).or_insert(fresh)))
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().expect("cache poisoned").len()
    }

    /// G_z = (Σ R_{z̄})†.
    pub fn gz(&self, z: C64) -> Result<CMat> {
        Ok(self.pair(z)?.gz.clone())
    }

    /// G_{z̄}† = Σ R_z.
    pub fn gz_bar_adjoint(&self, z: C64) -> Result<CMat> {
        Ok(self.pair(z.conj())?.gz.adjoint())
    }

    /// M_z = Σ(G − G_z).
    pub fn weyl(&self, z: C64) -> Result<CMat> {
        Ok(self.pair(z)?.mz.clone())
    }

    /// Θ + M_z; its invertibility decides membership of z in Z_{Σ,Θ}.
    pub fn pivot(&self, theta: &ExtensionParameter, z: C64) -> Result<CMat> {
        self.check_parameter(theta)?;
        Ok(theta.matrix() + &self.pair(z)?.mz)
    }

    pub fn in_z(&self, theta: &ExtensionParameter, z: C64) -> bool {
        self.pivot_inverse(theta, z).is_ok()
    }

    /// (Θ + M_z)^{-1}, or NotInZ when its condition number, measured against
    /// ‖Θ‖ + ‖Σ‖(‖G‖ + ‖G_z‖), reaches 1e12.
    pub fn pivot_inverse(&self, theta: &ExtensionParameter, z: C64) -> Result<CMat> {
        self.check_parameter(theta)?;
        let pair = self.pair(z)?;
        let pivot = theta.matrix() + &pair.mz;
        let reference = linalg::op_norm(theta.matrix())
            + linalg::op_norm(self.sigma.matrix()) * (linalg::op_norm(&self.g) + linalg::op_norm(&pair.gz));
        linalg::inverse_checked_against(&pivot, reference, COND_LIMIT).map_err(|cond| Error::NotInZ { z, cond })
    }

    fn check_parameter(&self, theta: &ExtensionParameter) -> Result<()> {
        if theta.dim() != self.target_dim() {
            return Err(Error::DimensionMismatch(format!(
                "Theta has dim {}, charge space has dim {}",
                theta.dim(),
                self.target_dim()
            )));
        }
        Ok(())
    }

    /// R_z + G_z (Θ + M_z)^{-1} G_{z̄}†.
    pub fn krein_resolvent(&self, theta: &ExtensionParameter, z: C64) -> Result<CMat> {
        let rz = self.h.resolvent(z)?;
        let inv = self.pivot_inverse(theta, z)?;
        let gz = self.gz(z)?;
        let gzb_adj = self.gz_bar_adjoint(z)?;
        Ok(rz + gz * inv * gzb_adj)
    }

    /// R + G Θ^{-1} G†, the resolvent at λ₀ when Θ is invertible.
    pub fn resolvent_at_lambda0(&self, theta: &ExtensionParameter) -> Result<CMat> {
        self.check_parameter(theta)?;
        let z = c(self.lambda0, 0.0);
        let inv = linalg::inverse_checked(theta.matrix(), COND_LIMIT).map_err(|cond| Error::NotInZ { z, cond })?;
        Ok(&self.r0 + &self.g * inv * self.g.adjoint())
    }

    /// The same (H, Σ) with a different reference point λ₀'.
    pub fn with_lambda0(&self, lambda0: f64) -> Result<Self> {
        Self::new(self.h.clone(), self.sigma.clone(), Some(lambda0))
    }

    /// Θ' = Θ + Σ(G_{λ₀} − G_{λ₀'}), which leaves the resolvent unchanged under λ₀ → λ₀'.
    pub fn transported_parameter(&self, theta: &ExtensionParameter, lambda0: f64) -> Result<ExtensionParameter> {
        let g_new = self.h.resolvent(c(lambda0, 0.0))? * self.sigma.star();
        theta.shifted(&(self.sigma.matrix() * (&self.g - g_new)))
    }

    /// Θ = Θ₀ − Σ R Σ†, the singular parameter reproducing the regular perturbation Σ†Θ₀^{-1}Σ.
    pub fn regular_parameter(&self, theta0: &ExtensionParameter) -> Result<ExtensionParameter> {
        self.check_parameter(theta0)?;
        let srs = self.sigma.matrix() * &self.r0 * self.sigma.star();
        theta0.shifted(&(-srs))
    }

    /// Numerical rank of Σ (singular values above 1e-10 of the largest).
    pub fn charge_rank(&self) -> usize {
        numerical_rank(self.sigma.matrix())
    }

    /// Numerical rank of G_z.
    pub fn gz_rank(&self, z: C64) -> Result<usize> {
        Ok(numerical_rank(&self.pair(z)?.gz))
    }

    pub fn boundary(&self) -> BoundaryMaps<'_> {
        BoundaryMaps { family: self }
    }

    /// H_Θ = z − K(z)^{-1}, Hermitian part.
    pub fn reconstruct_h_theta(&self, theta: &ExtensionParameter, z: C64) -> Result<CMat> {
        let k = self.krein_resolvent(theta, z)?;
        let inv = linalg::inverse_checked(&k, COND_LIMIT).map_err(|cond| Error::NotInZ { z, cond })?;
        let n = self.dim();
        Ok(linalg::hermitian_part(&(linalg::scalar(n, z) - inv)))
    }
}

fn numerical_rank(m: &CMat) -> usize {
    let sv = linalg::singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// Domain elements ψ = ψ₀ + Gφ stored by columns as (ψ₀, φ).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposed {
    pub regular: CMat,
    pub charge: CMat,
}

impl Decomposed {
    pub fn new(regular: CMat, charge: CMat) -> Result<Self> {
        if regular.ncols() != charge.ncols() {
            return Err(Error::DimensionMismatch("regular and charge parts differ in column count".into()));
        }
        Ok(Self { regular, charge })
    }

    pub fn ncols(&self) -> usize {
        self.regular.ncols()
    }

    /// ψ₀ + Gφ.
    pub fn assemble(&self, g: &CMat) -> CMat {
        &self.regular + g * &self.charge
    }

    pub fn column(&self, j: usize) -> Decomposed {
        Decomposed {
            regular: self.regular.columns(j, 1).into_owned(),
            charge: self.charge.columns(j, 1).into_owned(),
        }
    }
}

/// The boundary maps Σ₀ψ = Σψ₀ and Σ_*ψ = φ together with the extension S×.
pub struct BoundaryMaps<'a> {
    family: &'a KreinFamily,
}

impl BoundaryMaps<'_> {
    pub fn sigma0(&self, psi: &Decomposed) -> CMat {
        self.family.sigma.matrix() * &psi.regular
    }

    pub fn sigma_star(&self, psi: &Decomposed) -> CMat {
        psi.charge.clone()
    }

    /// S×ψ = Hψ₀ + λ₀Gφ, i.e. (−S× + λ₀)ψ = (−H + λ₀)ψ₀.
    pub fn s_cross(&self, psi: &Decomposed) -> CMat {
        self.family.h.matrix() * &psi.regular + &self.family.g * &psi.charge * c(self.family.lambda0, 0.0)
    }

    /// G_zφ written as ψ₀ + Gφ with ψ₀ = (λ₀ − z) R G_z φ.
    pub fn decompose_gz(&self, phi: &CMat, z: C64) -> Result<Decomposed> {
        let gz = self.family.gz(z)?;
        let regular = &self.family.r0 * gz * phi * (c(self.family.lambda0, 0.0) - z);
        Decomposed::new(regular, phi.clone())
    }

    /// Elements of dom(H_Θ): Σψ₀ = Θφ, with ψ₀ = Σ⁺Θφ + (1 − Σ⁺Σ)ξ.
    pub fn domain_element(&self, theta: &ExtensionParameter, phi: &CMat, xi: &CMat) -> Result<Decomposed> {
        let s = self.family.sigma.matrix();
        let pinv = s.clone().pseudo_inverse(1e-13).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let n = self.family.dim();
        let regular = &pinv * theta.matrix() * phi + (linalg::identity(n) - &pinv * s) * xi;
        Decomposed::new(regular, phi.clone())
    }
}

/// (Σ_*ψ, Σ₀ψ') − (Σ₀ψ, Σ_*ψ') compared with ⟨S×ψ, ψ'⟩ − ⟨ψ, S×ψ'⟩; returns the largest mismatch.
pub fn green_identity_check(family: &KreinFamily, samples: &[(Decomposed, Decomposed)]) -> f64 {
    let b = family.boundary();
    let g = family.g();
    let mut worst: f64 = 0.0;
    for (psi, phi) in samples {
        let a = psi.assemble(g);
        let a2 = phi.assemble(g);
        let lhs = b.s_cross(psi).adjoint() * &a2 - a.adjoint() * b.s_cross(phi);
        let rhs = b.sigma_star(psi).adjoint() * b.sigma0(phi) - b.sigma0(psi).adjoint() * b.sigma_star(phi);
        worst = worst.max(linalg::op_norm(&(lhs - rhs)));
    }
    worst
}

/// R_z + (Σ₀R_{z̄})†(Θ₀ − Σ₀R_zΣ₀†)^{-1}Σ₀R_z, the resolvent of H + Σ₀†Θ₀^{-1}Σ₀.
pub fn konno_kuroda(h: &SpectralOperator, sigma0: &ChargeMap, theta0: &ExtensionParameter, z: C64) -> Result<CMat> {
    if sigma0.dim() != h.dim() || theta0.dim() != sigma0.target_dim() {
        return Err(Error::DimensionMismatch("konno_kuroda: Sigma0/Theta0 shapes do not match H".into()));
    }
    if linalg::cond(theta0.matrix()) >= COND_LIMIT {
        return Err(Error::InvalidInput("Theta0 must be invertible".into()));
    }
    let rz = h.resolvent(z)?;
    let rzb = h.resolvent(z.conj())?;
    let s = sigma0.matrix();
    let srs = s * &rz * sigma0.star();
    let pivot = theta0.matrix() - &srs;
    let reference = linalg::op_norm(theta0.matrix()) + linalg::op_norm(&srs);
    let inv = linalg::inverse_checked_against(&pivot, reference, COND_LIMIT)
        .map_err(|cond| Error::SingularPivot { z, cond })?;
    let left = (s * rzb).adjoint();
    let right = s * &rz;
    Ok(rz + left * inv * right)
}

/// ‖konno_kuroda − krein_resolvent(Θ₀ − Σ₀RΣ₀†)‖.
pub fn regular_equivalence(
    h: &SpectralOperator,
    sigma0: &ChargeMap,
    theta0: &ExtensionParameter,
    z: C64,
    lambda0: Option<f64>,
) -> Result<f64> {
    let kk = konno_kuroda(h, sigma0, theta0, z)?;
    let family = KreinFamily::new(h.clone(), sigma0.clone(), lambda0)?;
    let theta = family.regular_parameter(theta0)?;
    let k = family.krein_resolvent(&theta, z)?;
    Ok(linalg::op_norm(&(kk - k)))
}

#[derive(Debug, Clone)]
pub struct AdditiveFormReport {
    /// max over eigenvectors of ‖W₋₁(H_Θψ − Hψ − Σ†φ)‖
    pub operator_residual: f64,
    /// max over eigenvectors of ‖Σψ₀ − Θφ‖
    pub boundary_residual: f64,
    pub extraction_cond: f64,
    pub eigenvalues: Vec<f64>,
    pub charges: CMat,
}

/// Checks H_Θ = H + Σ*Σ_* on the eigenvectors of the reconstructed H_Θ.
pub fn additive_form_check(family: &KreinFamily, theta: &ExtensionParameter, z: C64) -> Result<AdditiveFormReport> {
    let h_theta = family.reconstruct_h_theta(theta, z)?;
    let (eigenvalues, psi) = linalg::hermitian_eigen(&h_theta);
    let h = family.h().matrix();
    let star = family.sigma().star();
    let defect = (&h_theta - &h) * &psi;
    let (charges, extraction_cond) = if linalg::op_norm(family.sigma().matrix()) == 0.0 {
        (CMat::zeros(family.target_dim(), psi.ncols()), 1.0)
    } else {
        let k = linalg::cond(&star);
        (linalg::lstsq(&star, &defect, EXTRACTION_COND_LIMIT)?, k)
    };
    let w = family.h().weight(-1.0);
    let mismatch = &w * (defect - &star * &charges);
    let regular = &psi - family.g() * &charges;
    let boundary = family.sigma().matrix() * regular - theta.matrix() * &charges;
    let col_max = |m: &CMat| (0..m.ncols()).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    Ok(AdditiveFormReport {
        operator_residual: col_max(&mismatch),
        boundary_residual: col_max(&boundary),
        extraction_cond,
        eigenvalues,
        charges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use proptest::prelude::*;
    use rayon::prelude::*;

    fn instance(seed: u64) -> (KreinFamily, ExtensionParameter) {
        let mut ens = Ensemble::new(seed);
        let h = ens.hermitian(8, 10.0);
        let sigma = ens.charge_map(3, 8, 2.0);
        let theta = ExtensionParameter::self_adjoint(ens.hermitian_matrix(3, 2.0)).unwrap();
        (KreinFamily::new(h, sigma, Some(-12.0)).unwrap(), theta)
    }

    fn dense_inverse(m: &CMat) -> CMat {
        m.clone().lu().try_inverse().unwrap()
    }

    fn err(a: &CMat, b: &CMat) -> f64 {
        linalg::op_norm(&(a - b))
    }

    #[test]
    fn zero_charge_gives_zero_gz() {
        let h = SpectralOperator::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let k = KreinFamily::new(h, ChargeMap::zero(2, 3), None).unwrap();
        assert_eq!(k.gz(c(0.5, 1.0)).unwrap(), CMat::zeros(3, 2));
    }

    #[test]
    fn rg_identity() {
        let (k, _) = instance(1);
        let (z, w) = (c(1.0, 1.0), c(2.0, -3.0));
        let lhs = k.h().resolvent(w).unwrap() * k.gz(z).unwrap() * (z - w);
        let rhs = k.gz(w).unwrap() - k.gz(z).unwrap();
        assert!(err(&lhs, &rhs) <= 1e-11);
        let same = k.h().resolvent(z).unwrap() * k.gz(z).unwrap() * c(0.0, 0.0);
        assert_eq!(linalg::op_norm(&same), 0.0);
    }

    #[test]
    fn weyl_vanishes_at_lambda0() {
        let (k, _) = instance(2);
        let m = k.weyl(c(k.lambda0(), 0.0)).unwrap();
        assert!(linalg::op_norm(&m) <= 1e-15);
    }

    #[test]
    fn weyl_two_forms_agree() {
        let (k, _) = instance(3);
        let z = c(-2.5, 0.7);
        let alt = k.g().adjoint() * k.gz(z).unwrap() * (z - k.lambda0());
        assert!(err(&k.weyl(z).unwrap(), &alt) <= 1e-11);
    }

    #[test]
    fn weyl_relations() {
        let (k, _) = instance(4);
        let (z, w) = (c(1.0, 2.0), c(-4.0, -0.3));
        assert!(err(&k.weyl(z).unwrap().adjoint(), &k.weyl(z.conj()).unwrap()) <= 1e-11);
        let diff = k.weyl(z).unwrap() - k.weyl(w).unwrap();
        let rhs = k.gz(w.conj()).unwrap().adjoint() * k.gz(z).unwrap() * (z - w);
        assert!(err(&diff, &rhs) <= 1e-11);
    }

    #[test]
    fn zero_charge_returns_free_resolvent() {
        let mut ens = Ensemble::new(5);
        let h = ens.hermitian(5, 3.0);
        let k = KreinFamily::new(h.clone(), ChargeMap::zero(2, 5), None).unwrap();
        let theta = ExtensionParameter::scalar(1.5, 2);
        let z = c(0.3, 1.0);
        assert_eq!(k.krein_resolvent(&theta, z).unwrap(), h.resolvent(z).unwrap());
    }

    #[test]
    fn resolvent_at_lambda0_form() {
        let (k, theta) = instance(6);
        let at = k.krein_resolvent(&theta, c(k.lambda0(), 0.0)).unwrap();
        let r0 = k.r0() + k.g() * dense_inverse(theta.matrix()) * k.g().adjoint();
        assert!(err(&at, &r0) <= 1e-12);
        assert!(err(&k.resolvent_at_lambda0(&theta).unwrap(), &r0) <= 1e-12);
    }

    #[test]
    fn krein_matches_dense_additive_operator() {
        let (k, theta) = instance(7);
        let s = k.sigma().matrix();
        let r = dense_inverse(&(linalg::scalar(8, c(k.lambda0(), 0.0)) - k.h().matrix()));
        let coupling = dense_inverse(&(theta.matrix() + s * &r * s.adjoint()));
        let h_theta = k.h().matrix() + s.adjoint() * coupling * s;
        for z in [c(1.0, 1.0), c(-3.0, -2.0), c(12.0, 0.5)] {
            let oracle = dense_inverse(&(linalg::scalar(8, z) - &h_theta));
            assert!(err(&k.krein_resolvent(&theta, z).unwrap(), &oracle) <= 1e-10);
        }
    }

    #[test]
    fn singular_pivot_is_not_in_z() {
        let (k, _) = instance(8);
        let zero = ExtensionParameter::self_adjoint(CMat::zeros(3, 3)).unwrap();
        let got = k.krein_resolvent(&zero, c(k.lambda0(), 0.0));
        assert!(matches!(got, Err(Error::NotInZ { .. })));
        assert!(!k.in_z(&zero, c(k.lambda0(), 0.0)));
    }

    #[test]
    fn parameter_rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(ExtensionParameter::self_adjoint(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn konno_kuroda_trivial_cases() {
        let mut ens = Ensemble::new(9);
        let h = ens.hermitian(6, 5.0);
        let z = c(0.5, 2.0);
        let zero = konno_kuroda(&h, &ChargeMap::zero(2, 6), &ExtensionParameter::scalar(1.0, 2), z).unwrap();
        assert!(err(&zero, &h.resolvent(z).unwrap()) <= 1e-15);
        let shift = konno_kuroda(&h, &ChargeMap::identity(6), &ExtensionParameter::scalar(1.0, 6), z).unwrap();
        let shifted = h.resolvent(z - 1.0).unwrap();
        assert!(err(&shift, &shifted) <= 1e-12);
    }

    #[test]
    fn konno_kuroda_matches_dense() {
        let mut ens = Ensemble::new(10);
        let h = ens.hermitian(8, 10.0);
        let s = ens.charge_map(3, 8, 2.0);
        let theta0 = ExtensionParameter::self_adjoint(ens.hermitian_matrix(3, 1.0) + linalg::scalar(3, c(2.5, 0.0))).unwrap();
        let pert = s.star() * dense_inverse(theta0.matrix()) * s.matrix();
        for z in [c(1.0, 1.0), c(-7.0, -0.2)] {
            let oracle = dense_inverse(&(linalg::scalar(8, z) - h.matrix() - &pert));
            assert!(err(&konno_kuroda(&h, &s, &theta0, z).unwrap(), &oracle) <= 1e-10);
        }
    }

    #[test]
    fn regular_equivalence_cases() {
        let mut ens = Ensemble::new(11);
        let h = ens.hermitian(8, 10.0);
        let theta3 = ExtensionParameter::self_adjoint(ens.hermitian_matrix(3, 1.0) + linalg::scalar(3, c(-3.0, 0.0))).unwrap();
        let z = c(0.3, 1.7);
        assert!(regular_equivalence(&h, &ChargeMap::zero(3, 8), &theta3, z, None).unwrap() <= 1e-15);
        let s = ens.charge_map(3, 8, 2.0);
        assert!(regular_equivalence(&h, &s, &theta3, z, None).unwrap() <= 1e-10);
        assert!(regular_equivalence(&h, &s, &theta3, z, Some(-20.0)).unwrap() <= 1e-10);

        // 1×1: both formulas reduce to the same scalar rational expression
        let h1 = SpectralOperator::diagonal(&[0.7]).unwrap();
        let s1 = ChargeMap::new(CMat::from_element(1, 1, c(0.4, -0.3))).unwrap();
        let t1 = ExtensionParameter::scalar(2.0, 1);
        let r = regular_equivalence(&h1, &s1, &t1, c(-0.2, 0.9), None).unwrap();
        assert!(r <= 1e-15, "{r}");
        let exact = (c(-0.2, 0.9) - (0.7 + 0.25 / 2.0)).inv();
        let kk = konno_kuroda(&h1, &s1, &t1, c(-0.2, 0.9)).unwrap();
        assert!((kk[(0, 0)] - exact).norm() <= 1e-15);
    }

    fn random_decomposed(ens: &mut Ensemble, n: usize, t: usize) -> Decomposed {
        Decomposed::new(ens.column(n), ens.column(t)).unwrap()
    }

    #[test]
    fn green_identity_trivial_and_random() {
        let (k, _) = instance(12);
        let mut ens = Ensemble::new(13);
        let zero_charge = |ens: &mut Ensemble| Decomposed::new(ens.column(8), CMat::zeros(3, 1)).unwrap();
        let a = zero_charge(&mut ens);
        let b = zero_charge(&mut ens);
        assert!(green_identity_check(&k, &[(a, b)]) <= 1e-12);
        let d = random_decomposed(&mut ens, 8, 3);
        assert!(green_identity_check(&k, &[(d.clone(), d)]) <= 1e-11);
        let samples: Vec<_> = (0..50)
            .map(|_| (random_decomposed(&mut ens, 8, 3), random_decomposed(&mut ens, 8, 3)))
            .collect();
        assert!(green_identity_check(&k, &samples) <= 1e-10);
    }

    #[test]
    fn s_cross_symmetric_on_domain_of_h_theta() {
        let (k, theta) = instance(14);
        let mut ens = Ensemble::new(15);
        let b = k.boundary();
        let mk = |ens: &mut Ensemble| b.domain_element(&theta, &ens.column(3), &ens.column(8)).unwrap();
        let (p, q) = (mk(&mut ens), mk(&mut ens));
        assert!(err(&b.sigma0(&p), &(theta.matrix() * &p.charge)) <= 1e-12);
        let lhs = b.s_cross(&p).adjoint() * q.assemble(k.g());
        let rhs = p.assemble(k.g()).adjoint() * b.s_cross(&q);
        assert!(err(&lhs, &rhs) <= 1e-10);
        // S× on dom(H_Θ) is H_Θ
        let h_theta = k.reconstruct_h_theta(&theta, c(0.0, 1.0)).unwrap();
        assert!(err(&(h_theta * p.assemble(k.g())), &b.s_cross(&p)) <= 1e-9);
    }

    #[test]
    fn charge_extraction_left_inverts_gz() {
        let (k, _) = instance(16);
        let mut ens = Ensemble::new(17);
        let phi: CMat = ens.column(3);
        let z = c(-1.0, 2.0);
        let b = k.boundary();
        let d = b.decompose_gz(&phi, z).unwrap();
        assert!(err(&d.assemble(k.g()), &(k.gz(z).unwrap() * &phi)) <= 1e-11);
        assert!(err(&b.sigma_star(&d), &phi) <= 1e-15);
        // G_zφ spans ker(−S× + z)
        let v = d.assemble(k.g()) * z - b.s_cross(&d);
        assert!(linalg::op_norm(&v) <= 1e-10);
    }

    #[test]
    fn additive_form_zero_charge() {
        let mut ens = Ensemble::new(18);
        let h = ens.hermitian(6, 4.0);
        let k = KreinFamily::new(h, ChargeMap::zero(2, 6), None).unwrap();
        let rep = additive_form_check(&k, &ExtensionParameter::scalar(1.0, 2), c(0.0, 1.0)).unwrap();
        assert!(linalg::op_norm(&rep.charges) == 0.0);
        assert!(rep.operator_residual <= 1e-12 && rep.boundary_residual <= 1e-12);
    }

    #[test]
    fn additive_form_random() {
        let (k, theta) = instance(19);
        let rep = additive_form_check(&k, &theta, c(0.5, 1.0)).unwrap();
        assert!(rep.operator_residual <= 1e-9, "{}", rep.operator_residual);
        assert!(rep.boundary_residual <= 1e-9, "{}", rep.boundary_residual);
    }

    #[test]
    fn additive_form_full_rank_matches_konno_kuroda() {
        let mut ens = Ensemble::new(20);
        let h = ens.hermitian(5, 4.0);
        let theta0 = ExtensionParameter::self_adjoint(ens.hermitian_matrix(5, 1.0) + linalg::scalar(5, c(3.0, 0.0))).unwrap();
        let k = KreinFamily::new(h.clone(), ChargeMap::identity(5), Some(-6.0)).unwrap();
        let theta = k.regular_parameter(&theta0).unwrap();
        let rep = additive_form_check(&k, &theta, c(0.0, 1.0)).unwrap();
        let z = c(0.4, -1.0);
        let kk = konno_kuroda(&h, &ChargeMap::identity(5), &theta0, z).unwrap();
        let (vals, _) = linalg::hermitian_eigen(&(linalg::scalar(5, z) - dense_inverse(&kk)));
        for (a, b) in rep.eigenvalues.iter().zip(&vals) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!(rep.operator_residual <= 1e-9 && rep.boundary_residual <= 1e-9);
    }

    #[test]
    fn ill_conditioned_extraction_refused() {
        let mut ens = Ensemble::new(21);
        let h = ens.hermitian(4, 2.0);
        let mut s = ens.complex_matrix(2, 4, 1.0);
        let row = s.row(0).into_owned();
        s.set_row(1, &row);
        let k = KreinFamily::new(h, ChargeMap::new(s).unwrap(), Some(-5.0)).unwrap();
        let theta = ExtensionParameter::scalar(1.0, 2);
        assert!(matches!(
            additive_form_check(&k, &theta, c(0.0, 1.0)),
            Err(Error::DecompositionIllConditioned { .. })
        ));
    }

    #[test]
    fn lambda0_independence() {
        let (k, theta) = instance(22);
        for l in [-3.0, -30.0, 20.5] {
            let k2 = k.with_lambda0(l).unwrap();
            let t2 = k.transported_parameter(&theta, l).unwrap();
            for z in [c(0.0, 1.0), c(4.0, -2.0)] {
                let a = k.krein_resolvent(&theta, z).unwrap();
                let b = k2.krein_resolvent(&t2, z).unwrap();
                assert!(err(&a, &b) <= 1e-10);
            }
        }
    }

    #[test]
    fn lemma_suff_proxies() {
        let (k, theta) = instance(23);
        let z = c(0.7, 1.3);
        assert_eq!(k.charge_rank(), 3);
        assert_eq!(k.gz_rank(z).unwrap(), 3);
        let mut ens = Ensemble::new(24);
        let pivot = k.pivot(&theta, z).unwrap();
        let gz = k.gz(z).unwrap();
        for _ in 0..100 {
            let phi: CMat = ens.unit_column(3);
            let lhs = linalg::op_norm(&(&pivot * &phi)).powi(2);
            let rhs = z.im.powi(2) * linalg::op_norm(&(&gz * &phi)).powi(4);
            assert!(lhs >= rhs * (1.0 - 1e-12));
        }
        let deficient = KreinFamily::new(k.h().clone(), ChargeMap::new(CMat::from_fn(3, 8, |_, j| c(j as f64, 0.0))).unwrap(), None).unwrap();
        assert_eq!(deficient.charge_rank(), 1);
        assert_eq!(deficient.gz_rank(z).unwrap(), 1);
    }

    #[test]
    fn cache_is_consistent_under_parallel_insertion() {
        let (k, _) = instance(25);
        let zs: Vec<C64> = (0..64).map(|i| c(-8.0 + 0.25 * i as f64, 1.0 + (i % 5) as f64)).collect();
        let cached: Vec<CMat> = zs.par_iter().chain(zs.par_iter()).map(|&z| k.weyl(z).unwrap()).collect();
        assert_eq!(k.cache_len(), zs.len());
        for (i, &z) in zs.iter().enumerate() {
            let fresh = k.pair_uncached(z).unwrap();
            assert!(err(&cached[i], &fresh.mz) <= 1e-13);
            assert!(err(&cached[i + zs.len()], &fresh.mz) <= 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn krein_is_pseudo_resolvent(seed in any::<u64>(), a in -10.0..10.0f64, b in 0.2..10.0f64, d in -10.0..10.0f64, e in -10.0..-0.2f64) {
            let (k, theta) = instance(seed);
            let (z, w) = (c(a, b), c(d, e));
            let kz = k.krein_resolvent(&theta, z).unwrap();
            let kw = k.krein_resolvent(&theta, w).unwrap();
            prop_assert!(err(&(&kz - &kw), &(&kz * &kw * (w - z))) <= 1e-10);
            let kzb = k.krein_resolvent(&theta, z.conj()).unwrap();
            prop_assert!(err(&kz.adjoint(), &kzb) <= 1e-11);
        }

        #[test]
        fn gz_resolvent_relation(seed in any::<u64>(), a in -10.0..10.0f64, b in 0.2..5.0f64) {
            let (k, _) = instance(seed);
            let z = c(a, b);
            let w = c(-a, -2.0 * b);
            let lhs = k.h().resolvent(w).unwrap() * k.gz(z).unwrap() * (z - w);
            prop_assert!(err(&lhs, &(k.gz(w).unwrap() - k.gz(z).unwrap())) <= 1e-11);
        }
    }
}
