//! The twofold construction: a first Kreĭn stage with Σ = A, Θ = −T, then a second
//! stage with Σ̂ = 1 − A_*, giving the resolvent of Ĥ_T = H + A* + A_T.

use crate::error::{Error, Result};
use crate::krein::{Decomposed, ExtensionParameter, KreinFamily, ParameterKind};
use crate::linalg::{self, c, CMat, C64, COND_LIMIT};
use crate::scale::{scale_norm, ChargeMap, SpectralOperator};

/// Doublings tried by the γ ladder before giving up.
pub const LADDER_DOUBLINGS: usize = 60;

/// How the 2×2 block systems are inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockSolve {
    /// One dense 2n×2n factorization.
    #[default]
    Dense,
    /// Pivot on the (2,2) block.
    FirstSchur,
    /// Pivot on the (1,1) block.
    SecondSchur,
}

/// 2×2 block operator with Hilbert-scale tags on the two domain and codomain slots.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    blocks: [[CMat; 2]; 2],
    domain: [f64; 2],
    codomain: [f64; 2],
}

impl BlockOperator {
    pub fn new(blocks: [[CMat; 2]; 2], domain: [f64; 2], codomain: [f64; 2]) -> Result<Self> {
        let n = blocks[0][0].nrows();
        for row in &blocks {
            for b in row {
                linalg::check_square("block", b, n)?;
            }
        }
        Ok(Self { blocks, domain, codomain })
    }

    pub fn from_dense(m: &CMat, domain: [f64; 2], codomain: [f64; 2]) -> Result<Self> {
        let n = m.nrows() / 2;
        linalg::check_square("block operator", m, 2 * n)?;
        let blk = |i: usize, j: usize| m.view((i * n, j * n), (n, n)).into_owned();
        Self::new([[blk(0, 0), blk(0, 1)], [blk(1, 0), blk(1, 1)]], domain, codomain)
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0][0].nrows()
    }

    pub fn block(&self, i: usize, j: usize) -> &CMat {
        &self.blocks[i][j]
    }

    pub fn domain(&self) -> [f64; 2] {
        self.domain
    }

    pub fn codomain(&self) -> [f64; 2] {
        self.codomain
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.block_dim();
        let mut m = CMat::zeros(2 * n, 2 * n);
        for i in 0..2 {
            for j in 0..2 {
                m.view_mut((i * n, j * n), (n, n)).copy_from(&self.blocks[i][j]);
            }
        }
        m
    }

    /// self ∘ rhs; the domain tags of `self` must equal the codomain tags of `rhs`.
    pub fn compose(&self, rhs: &BlockOperator) -> Result<BlockOperator> {
        if self.domain != rhs.codomain {
            return Err(Error::DimensionMismatch(format!(
                "scale tags {:?} cannot follow {:?}",
                self.domain, rhs.codomain
            )));
        }
        let m = self.to_dense() * rhs.to_dense();
        Self::from_dense(&m, rhs.domain, self.codomain)
    }

    /// Dual with respect to the pairing ⟨·,·⟩_{−s,s}: the conjugate transpose with negated, swapped tags.
    pub fn pairing_dual(&self) -> BlockOperator {
        let b = &self.blocks;
        BlockOperator {
            blocks: [
                [b[0][0].adjoint(), b[1][0].adjoint()],
                [b[0][1].adjoint(), b[1][1].adjoint()],
            ],
            domain: [-self.codomain[0], -self.codomain[1]],
            codomain: [-self.domain[0], -self.domain[1]],
        }
    }

    /// Norm as a map between the tagged spaces built over `h`.
    pub fn weighted_norm(&self, h: &SpectralOperator) -> f64 {
        let n = self.block_dim();
        let mut left = CMat::zeros(2 * n, 2 * n);
        let mut right = CMat::zeros(2 * n, 2 * n);
        for k in 0..2 {
            left.view_mut((k * n, k * n), (n, n)).copy_from(&h.weight(self.codomain[k]));
            right.view_mut((k * n, k * n), (n, n)).copy_from(&h.weight(-self.domain[k]));
        }
        linalg::op_norm(&(left * self.to_dense() * right))
    }

    /// Inverse (tags swapped). On failure the offending condition number is returned.
    pub fn inverse(&self, mode: BlockSolve) -> std::result::Result<BlockOperator, f64> {
        let [[p, q], [r, d]] = &self.blocks;
        let blocks = match mode {
            BlockSolve::Dense => {
                let inv = linalg::inverse_checked(&self.to_dense(), COND_LIMIT)?;
                return Ok(Self::from_dense(&inv, self.codomain, self.domain).expect("square"));
            }
            BlockSolve::FirstSchur => {
                let di = linalg::inverse_checked(d, COND_LIMIT)?;
                let si = linalg::inverse_checked(&(p - q * &di * r), COND_LIMIT)?;
                let a12 = -(&si * q * &di);
                let a21 = -(&di * r * &si);
                let a22 = &di + &di * r * &si * q * &di;
                [[si, a12], [a21, a22]]
            }
            BlockSolve::SecondSchur => {
                let pi = linalg::inverse_checked(p, COND_LIMIT)?;
                let si = linalg::inverse_checked(&(d - r * &pi * q), COND_LIMIT)?;
                let a11 = &pi + &pi * q * &si * r * &pi;
                let a12 = -(&pi * q * &si);
                let a21 = -(&si * r * &pi);
                [[a11, a12], [a21, si]]
            }
        };
        Ok(BlockOperator { blocks, domain: self.codomain, codomain: self.domain })
    }
}

/// Result of the γ ladder search.
#[derive(Debug, Clone)]
pub struct GammaCertificate {
    pub gamma: f64,
    pub g_norm: f64,
    pub g_adj_norm: f64,
    pub rungs: Vec<LadderRung>,
}

#[derive(Debug, Clone, Copy)]
pub struct LadderRung {
    pub gamma: f64,
    /// ‖G_{iγ}‖
    pub g_norm: f64,
    /// ‖G_{−iγ}†‖
    pub g_adj_norm: f64,
    /// ‖A‖_{𝔥_s→𝔉} / γ^{1−s}
    pub bound: f64,
}

impl GammaCertificate {
    /// True when every rung with γ ≥ 1 respects the decay bound.
    pub fn decay_certified(&self) -> bool {
        self.rungs
            .iter()
            .filter(|r| r.gamma >= 1.0)
            .all(|r| r.g_norm <= r.bound * (1.0 + 1e-12) + 1e-300 && r.g_adj_norm <= r.bound * (1.0 + 1e-12) + 1e-300)
    }
}

/// Ĝ_z in both closed forms plus its (ψ₀, φ) decomposition.
#[derive(Debug, Clone)]
pub struct HatG {
    /// (−H_T + z)^{-1} + G_z (A_T G_z)^{-1}
    pub first_form: CMat,
    /// (−H + z)^{-1} + G_z (A_T G_z)^{-1} (1 − G_{z̄}†)
    pub second_form: CMat,
    pub decomposed: Decomposed,
}

/// (H, A, T) with λ₀ and λ̂₀.
#[derive(Debug, Clone)]
pub struct TwofoldSystem {
    family: KreinFamily,
    t: ExtensionParameter,
    s: f64,
    a_scale_norm: f64,
    hat_lambda0: Option<f64>,
    gamma_star: Option<f64>,
    relative_bound: Option<f64>,
}

impl TwofoldSystem {
    /// `s ∈ (0, 1)` is the declared scale with A ∈ 𝔅(𝔥_s, 𝔉).
    pub fn new(h: SpectralOperator, a: ChargeMap, t: ExtensionParameter, lambda0: Option<f64>, s: f64) -> Result<Self> {
        if a.target_dim() != h.dim() {
            return Err(Error::DimensionMismatch(format!(
                "A must map into the same space: target {} vs dim {}",
                a.target_dim(),
                h.dim()
            )));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidInput(format!("scale index s = {s} outside (0, 1)")));
        }
        if t.dim() != h.dim() {
            return Err(Error::DimensionMismatch(format!("T has dim {}, H has dim {}", t.dim(), h.dim())));
        }
        let a_scale_norm = scale_norm(a.matrix(), &h, s, None, 0.0)?;
        let family = KreinFamily::new(h, a, lambda0)?;
        let mut sys = Self { family, t, s, a_scale_norm, hat_lambda0: None, gamma_star: None, relative_bound: None };
        sys.hat_lambda0 = sys.choose_hat_lambda0();
        if sys.t.kind() == ParameterKind::SymmetricOnly {
            let cert = sys.neumann_gamma_search()?;
            let bound = sys.relative_bound_at(cert.gamma)?;
            sys.gamma_star = Some(cert.gamma);
            sys.relative_bound = Some(bound);
            if bound >= 1.0 {
                return Err(Error::RelativeBoundTooLarge { bound });
            }
        }
        Ok(sys)
    }

    /// Like [`TwofoldSystem::new`] with λ₀ pushed below the spectrum until ‖G‖ ≤ `g_target`.
    pub fn semibounded(h: SpectralOperator, a: ChargeMap, t: ExtensionParameter, s: f64, g_target: f64) -> Result<Self> {
        let lambda0 = contractive_lambda0(&h, &a, g_target)?;
        Self::new(h, a, t, Some(lambda0), s)
    }

    /// λ̂₀ = λ₀ for invertible T, otherwise the first point of a real ladder below the
    /// spectrum where A_T G_λ is invertible. None when the first stage is degenerate there.
    fn choose_hat_lambda0(&self) -> Option<f64> {
        let l0 = self.family.lambda0();
        if linalg::cond(self.t.matrix()) < COND_LIMIT {
            return Some(l0);
        }
        let base = l0.min(self.h().min_eigenvalue());
        for k in 0..LADDER_DOUBLINGS {
            let lambda = base - 2f64.powi(k as i32);
            if self.h().spectral_gap(c(lambda, 0.0)) > 1e-8 && self.a_t_g(c(lambda, 0.0)).is_ok() {
                return Some(lambda);
            }
        }
        None
    }

    pub fn family(&self) -> &KreinFamily {
        &self.family
    }

    pub fn h(&self) -> &SpectralOperator {
        self.family.h()
    }

    pub fn a(&self) -> &ChargeMap {
        self.family.sigma()
    }

    pub fn t(&self) -> &ExtensionParameter {
        &self.t
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn lambda0(&self) -> f64 {
        self.family.lambda0()
    }

    pub fn hat_lambda0(&self) -> Option<f64> {
        self.hat_lambda0
    }

    fn require_hat_lambda0(&self) -> Result<C64> {
        self.hat_lambda0.map(|l| c(l, 0.0)).ok_or(Error::LadderExhausted { doublings: LADDER_DOUBLINGS })
    }

    pub fn scale_index(&self) -> f64 {
        self.s
    }

    /// ‖A‖_{𝔥_s→𝔉} for the declared s.
    pub fn a_scale_norm(&self) -> f64 {
        self.a_scale_norm
    }

    pub fn gamma_star(&self) -> Option<f64> {
        self.gamma_star
    }

    /// Recorded â for symmetric-only T.
    pub fn relative_bound(&self) -> Option<f64> {
        self.relative_bound
    }

    /// Same (H, A, λ₀) with another T.
    pub fn with_t(&self, t: ExtensionParameter) -> Result<Self> {
        Self::new(self.h().clone(), self.a().clone(), t, Some(self.lambda0()), self.s)
    }

    fn identity(&self) -> CMat {
        linalg::identity(self.dim())
    }

    /// A_T G_z = T − A(G − G_z).
    pub fn a_t_g(&self, z: C64) -> Result<CMat> {
        let x = self.t.matrix() - self.family.weyl(z)?;
        let reference = linalg::op_norm(self.t.matrix())
            + linalg::op_norm(self.a().matrix()) * (linalg::op_norm(self.family.g()) + linalg::op_norm(&self.family.gz(z)?));
        if linalg::cond_against(&x, reference) >= COND_LIMIT {
            return Err(Error::NotInZ { z, cond: linalg::cond_against(&x, reference) });
        }
        Ok(x)
    }

    fn a_t_g_inverse(&self, z: C64) -> Result<CMat> {
        let x = self.a_t_g(z)?;
        linalg::inverse_checked(&x, f64::INFINITY).map_err(|cond| Error::NotInZ { z, cond })
    }

    /// (−H_T + z)^{-1} = R_z − G_z (A_T G_z)^{-1} G_{z̄}†.
    pub fn first_stage_resolvent(&self, z: C64) -> Result<CMat> {
        let xi = self.a_t_g_inverse(z)?;
        Ok(self.h().resolvent(z)? - self.family.gz(z)? * xi * self.family.gz_bar_adjoint(z)?)
    }

    /// Ĝ_z in both forms and decomposed as ψ₀ + Gχ with χ = (A_T G_z)^{-1}(1 − G_{z̄}†).
    pub fn hat_g(&self, z: C64) -> Result<HatG> {
        let xi = self.a_t_g_inverse(z)?;
        let rz = self.h().resolvent(z)?;
        let gz = self.family.gz(z)?;
        let gzb_adj = self.family.gz_bar_adjoint(z)?;
        let first_stage = &rz - &gz * &xi * &gzb_adj;
        let first_form = first_stage + &gz * &xi;
        let chi = &xi * (self.identity() - &gzb_adj);
        let second_form = &rz + &gz * &chi;
        // G_z − G = (λ₀ − z) R G_z
        let regular = &rz + self.family.r0() * &gz * &chi * (c(self.lambda0(), 0.0) - z);
        let decomposed = Decomposed::new(regular, chi)?;
        Ok(HatG { first_form, second_form, decomposed })
    }

    /// A_Tψ = Aψ₀ + Tφ on decomposed elements.
    pub fn apply_a_t(&self, psi: &Decomposed) -> CMat {
        self.a().matrix() * &psi.regular + self.t.matrix() * &psi.charge
    }

    /// ‖A_T Ĝ_z − 1‖.
    pub fn lemma_cap_residual(&self, z: C64) -> Result<f64> {
        let hg = self.hat_g(z)?;
        Ok(linalg::op_norm(&(self.apply_a_t(&hg.decomposed) - self.identity())))
    }

    /// Σ̂Ĝ_z = R_z − (1 − G_z)(A_T G_z)^{-1}(1 − G_{z̄}†).
    pub fn sigma_hat_g(&self, z: C64) -> Result<CMat> {
        let xi = self.a_t_g_inverse(z)?;
        let one = self.identity();
        let gz = self.family.gz(z)?;
        let gzb_adj = self.family.gz_bar_adjoint(z)?;
        Ok(self.h().resolvent(z)? - (&one - gz) * xi * (&one - gzb_adj))
    }

    /// (1 − A_*)Ĝ_z assembled from the decomposition of Ĝ_z.
    pub fn sigma_hat_g_assembled(&self, z: C64) -> Result<CMat> {
        let hg = self.hat_g(z)?;
        Ok(hg.decomposed.assemble(self.family.g()) - &hg.decomposed.charge)
    }

    /// Θ̂ = −Σ̂Ĝ_{λ̂₀}, the parameter of the second stage.
    pub fn stage2_parameter(&self) -> Result<CMat> {
        Ok(-self.sigma_hat_g(self.require_hat_lambda0()?)?)
    }

    /// Second Kreĭn stage over H_T: R_T(z) + Ĝ_z(Θ̂ + M̂_z)^{-1}Ĝ_{z̄}† with M̂_z = Σ̂(Ĝ − Ĝ_z).
    pub fn stage2_resolvent(&self, z: C64) -> Result<CMat> {
        let theta_hat = self.stage2_parameter()?;
        let shg_hat = self.sigma_hat_g(self.require_hat_lambda0()?)?;
        let m_hat = shg_hat - self.sigma_hat_g(z)?;
        let pivot = theta_hat + &m_hat;
        let inv = linalg::inverse_checked(&pivot, COND_LIMIT).map_err(|cond| Error::NotInZ { z, cond })?;
        let hg = self.hat_g(z)?.first_form;
        let hgb = self.hat_g(z.conj())?.first_form;
        Ok(self.first_stage_resolvent(z)? + hg * inv * hgb.adjoint())
    }

    /// Σ_{Θ_T}𝔾_z = [[A_T G_z, G_{z̄}† − 1], [G_z − 1, R_z]].
    pub fn block_matrix(&self, z: C64) -> Result<BlockOperator> {
        let one = self.identity();
        let x = self.t.matrix() - self.family.weyl(z)?;
        let b12 = self.family.gz_bar_adjoint(z)? - &one;
        let b21 = self.family.gz(z)? - &one;
        let rz = self.h().resolvent(z)?;
        BlockOperator::new([[x, b12], [b21, rz]], [0.0, -1.0], [0.0, 1.0])
    }

    pub fn twofold_resolvent(&self, z: C64) -> Result<CMat> {
        self.twofold_resolvent_with(z, BlockSolve::Dense)
    }

    /// R_z − [G_z R_z] B^{-1} [G_{z̄}†; R_z].
    pub fn twofold_resolvent_with(&self, z: C64, mode: BlockSolve) -> Result<CMat> {
        let b = self.block_matrix(z)?;
        let inv = b.inverse(mode).map_err(|cond| Error::BlockSingular { z, cond })?;
        let rz = self.h().resolvent(z)?;
        let gz = self.family.gz(z)?;
        let gzb_adj = self.family.gz_bar_adjoint(z)?;
        let left = &gz * inv.block(0, 0) * &gzb_adj
            + &gz * inv.block(0, 1) * &rz
            + &rz * inv.block(1, 0) * &gzb_adj
            + &rz * inv.block(1, 1) * &rz;
        Ok(&rz - left)
    }

    /// 𝕊 = [A; 1], the charge map of the second stage written over H.
    pub fn stacked_charge(&self) -> Result<ChargeMap> {
        let n = self.dim();
        let mut s = CMat::zeros(2 * n, n);
        s.view_mut((0, 0), (n, n)).copy_from(self.a().matrix());
        s.view_mut((n, 0), (n, n)).copy_from(&self.identity());
        ChargeMap::new(s)
    }

    /// Θ_T = [[−T, 1 − G†], [1 − G, −R]].
    pub fn block_theta(&self) -> Result<BlockOperator> {
        let one = self.identity();
        let g = self.family.g();
        BlockOperator::new(
            [[-self.t.matrix(), &one - g.adjoint()], [&one - g, -self.family.r0()]],
            [0.0, -1.0],
            [0.0, 1.0],
        )
    }

    /// R_z − 𝔾_z(Σ_{Θ_T}𝔾_z)^{-1}𝔾_{z̄}† as a Kreĭn resolvent with Σ = 𝕊 and Θ = Θ_T.
    pub fn kbb_resolvent(&self, z: C64) -> Result<CMat> {
        let family = KreinFamily::new(self.h().clone(), self.stacked_charge()?, Some(self.lambda0()))?;
        let theta = ExtensionParameter::self_adjoint(self.block_theta()?.to_dense())?;
        family.krein_resolvent(&theta, z).map_err(|e| match e {
            Error::NotInZ { z, cond } => Error::BlockSingular { z, cond },
            other => other,
        })
    }

    fn check_contractive(&self) -> Result<()> {
        let norm = linalg::op_norm(self.family.g());
        if norm >= 1.0 {
            return Err(Error::GNotContractive { norm, lambda0: self.lambda0() });
        }
        Ok(())
    }

    /// Ĥ₀ = H + A + A† − A R A†.
    pub fn hat_h0(&self) -> CMat {
        let a = self.a().matrix();
        self.h().matrix() + a + a.adjoint() - a * self.family.r0() * a.adjoint()
    }

    /// (1 − G†)(−H + λ₀)(1 − G) = −Ĥ₀ + λ₀.
    pub fn hat_h0_factorized(&self) -> Result<CMat> {
        self.check_contractive()?;
        let one = self.identity();
        let g = self.family.g();
        let shifted = linalg::scalar(self.dim(), c(self.lambda0(), 0.0)) - self.h().matrix();
        Ok((&one - g.adjoint()) * shifted * (&one - g))
    }

    /// (1 − G)^{-1}(−H + λ₀)^{-1}(1 − G†)^{-1}.
    pub fn hat_h0_inverse(&self) -> Result<CMat> {
        self.check_contractive()?;
        let (lo, hi) = self.one_minus_g_inverses()?;
        Ok(lo * self.family.r0() * hi)
    }

    fn one_minus_g_inverses(&self) -> Result<(CMat, CMat)> {
        let one = self.identity();
        let g = self.family.g();
        let z = c(self.lambda0(), 0.0);
        let lo = linalg::inverse_checked(&(&one - g), COND_LIMIT).map_err(|cond| Error::BlockSingular { z, cond })?;
        let hi = lo.adjoint();
        Ok((lo, hi))
    }

    /// (−Ĥ₀ + z)^{-1} from the factorized Ĥ₀.
    pub fn hat_r0(&self, z: C64) -> Result<CMat> {
        let hat_h0 = linalg::scalar(self.dim(), c(self.lambda0(), 0.0)) - self.hat_h0_factorized()?;
        let m = linalg::scalar(self.dim(), z) - hat_h0;
        linalg::inverse_checked(&m, COND_LIMIT).map_err(|_| Error::SpectrumHit { z, gap: 0.0 })
    }

    /// R̂₀ + R̂₀(1 − T R̂₀)^{-1} T R̂₀ = (−(Ĥ₀ + T) + z)^{-1}.
    pub fn res_t_composition(&self, z: C64) -> Result<CMat> {
        let r0 = self.hat_r0(z)?;
        let t = self.t.matrix();
        let neumann = self.identity() - t * &r0;
        let reference = 1.0 + linalg::op_norm(t) * linalg::op_norm(&r0);
        let inv = linalg::inverse_checked_against(&neumann, reference, COND_LIMIT)
            .map_err(|cond| Error::NeumannSingular { z, cond })?;
        Ok(&r0 + &r0 * inv * t * &r0)
    }

    /// The explicit inverse of Θ_T.
    pub fn block_theta_inverse(&self) -> Result<BlockOperator> {
        let one = self.identity();
        let t = self.t.matrix();
        let z = c(self.lambda0(), 0.0);
        let hat_r0 = self.hat_h0_inverse()?;
        let (lo, hi) = self.one_minus_g_inverses()?;
        let reference = 1.0 + linalg::op_norm(t) * linalg::op_norm(&hat_r0);
        let left = linalg::inverse_checked_against(&(&one - t * &hat_r0), reference, COND_LIMIT)
            .map_err(|cond| Error::NeumannSingular { z, cond })?;
        let right = linalg::inverse_checked_against(&(&one - &hat_r0 * t), reference, COND_LIMIT)
            .map_err(|cond| Error::NeumannSingular { z, cond })?;
        let shifted = linalg::scalar(self.dim(), z) - self.h().matrix();
        let g_adj = self.family.g().adjoint();
        let b11 = &hat_r0 * &left;
        let b12 = right * &lo;
        let b21 = &hi * &left;
        let b22 = (&hi * &left * (&one - g_adj) - &one) * shifted;
        BlockOperator::new([[b11, b12], [b21, b22]], [0.0, 1.0], [0.0, -1.0])
    }

    /// R + 𝔾 Θ_T^{-1} 𝔾† with 𝔾 = [G R], the resolvent at λ₀.
    pub fn tt_resolvent(&self) -> Result<CMat> {
        let inv = self.block_theta_inverse()?;
        let g = self.family.g();
        let r = self.family.r0();
        let gg = [g, r];
        let mut out = r.clone();
        for i in 0..2 {
            for j in 0..2 {
                out += gg[i] * inv.block(i, j) * gg[j].adjoint();
            }
        }
        Ok(out)
    }

    /// Smallest γ = 2^k with ‖G_{iγ}‖ < 1 and ‖G_{−iγ}†‖ < 1.
    pub fn neumann_gamma_search(&self) -> Result<GammaCertificate> {
        let mut rungs = Vec::new();
        for k in 0..=LADDER_DOUBLINGS {
            let gamma = 2f64.powi(k as i32);
            let g_norm = linalg::op_norm(&self.family.gz(c(0.0, gamma))?);
            let g_adj_norm = linalg::op_norm(&self.family.gz(c(0.0, -gamma))?);
            let bound = self.a_scale_norm / gamma.powf(1.0 - self.s);
            rungs.push(LadderRung { gamma, g_norm, g_adj_norm, bound });
            if g_norm < 1.0 && g_adj_norm < 1.0 {
                return Ok(GammaCertificate { gamma, g_norm, g_adj_norm, rungs });
            }
        }
        Err(Error::LadderExhausted { doublings: LADDER_DOUBLINGS })
    }

    /// ‖T R̂₀(iγ)‖ with R̂₀ from the additive Ĥ₀.
    pub fn relative_bound_at(&self, gamma: f64) -> Result<f64> {
        let z = c(0.0, gamma);
        let m = linalg::scalar(self.dim(), z) - self.hat_h0();
        let r = linalg::inverse_checked(&m, COND_LIMIT).map_err(|_| Error::SpectrumHit { z, gap: 0.0 })?;
        Ok(linalg::op_norm(&(self.t.matrix() * r)))
    }

    /// T_λ = A(G − G_λ) = (λ − λ₀) G† G_λ.
    pub fn t_lambda(&self, lambda: f64) -> Result<CMat> {
        self.family.weyl(c(lambda, 0.0))
    }

    /// The same operator Ĥ_T written with reference point λ: T' = T − T_λ.
    pub fn rebuilt_at(&self, lambda: f64) -> Result<Self> {
        let t = self.t.shifted(&(-self.t_lambda(lambda)?))?;
        Self::new(self.h().clone(), self.a().clone(), t, Some(lambda), self.s)
    }

    /// z − K(z)^{-1} for the twofold resolvent K, without symmetrization.
    pub fn reconstructed_hamiltonian(&self, z: C64) -> Result<CMat> {
        let k = self.twofold_resolvent(z)?;
        let inv = linalg::inverse_checked(&k, COND_LIMIT).map_err(|cond| Error::BlockSingular { z, cond })?;
        Ok(linalg::scalar(self.dim(), z) - inv)
    }

    /// Element of dom(S×_T): φ = ψ, ψ₀ = (1 − G)ψ.
    pub fn s_cross_t_domain(&self, psi: &CMat) -> Decomposed {
        Decomposed { regular: (self.identity() - self.family.g()) * psi, charge: psi.clone() }
    }

    /// S×_Tψ = S×ψ + A_Tψ.
    pub fn apply_s_cross_t(&self, psi: &Decomposed) -> CMat {
        self.family.boundary().s_cross(psi) + self.apply_a_t(psi)
    }

    /// max |⟨S×_Tψ, ψ'⟩ − ⟨ψ, S×_Tψ'⟩| over sample pairs from dom(S×_T).
    pub fn s_cross_t_symmetry(&self, samples: &[(CMat, CMat)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, q) in samples {
            let dp = self.s_cross_t_domain(p);
            let dq = self.s_cross_t_domain(q);
            let lhs = self.apply_s_cross_t(&dp).adjoint() * q;
            let rhs = p.adjoint() * self.apply_s_cross_t(&dq);
            worst = worst.max(linalg::op_norm(&(lhs - rhs)));
        }
        worst
    }
}

/// λ₀ below the spectrum of H with ‖R_{λ₀}A†‖ ≤ `g_target`, found on a doubling ladder.
pub fn contractive_lambda0(h: &SpectralOperator, a: &ChargeMap, g_target: f64) -> Result<f64> {
    let bottom = h.min_eigenvalue();
    let mut last = f64::INFINITY;
    for k in 0..=LADDER_DOUBLINGS {
        let lambda = bottom - 2f64.powi(k as i32);
        let g = h.resolvent(c(lambda, 0.0))? * a.star();
        last = linalg::op_norm(&g);
        if last <= g_target {
            return Ok(lambda);
        }
    }
    Err(Error::GNotContractive { norm: last, lambda0: bottom - 2f64.powi(LADDER_DOUBLINGS as i32) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use proptest::prelude::*;

    fn err(a: &CMat, b: &CMat) -> f64 {
        linalg::op_norm(&(a - b))
    }

    fn dense_inverse(m: &CMat) -> CMat {
        m.clone().lu().try_inverse().unwrap()
    }

    fn resolvent_of(m: &CMat, z: C64) -> CMat {
        dense_inverse(&(linalg::scalar(m.nrows(), z) - m))
    }

    /// Random semibounded instance with ‖G‖ ≤ 1/2 and a small symmetric T.
    fn system(seed: u64) -> TwofoldSystem {
        let mut ens = Ensemble::new(seed);
        let h = ens.hermitian(8, 10.0);
        let a = ens.charge_map(8, 8, 2.0);
        let t = ExtensionParameter::symmetric_only(ens.hermitian_matrix(8, 0.5)).unwrap();
        TwofoldSystem::semibounded(h, a, t, 0.5, 0.5).unwrap()
    }

    fn zpoints() -> [C64; 4] {
        [c(1.0, 2.0), c(-3.0, -1.0), c(0.5, 0.3), c(12.0, -4.0)]
    }

    #[test]
    fn block_solves_agree() {
        let mut ens = Ensemble::new(1);
        let m = ens.complex_matrix(6, 6, 1.0) + linalg::scalar(6, c(2.0, 0.0));
        let b = BlockOperator::from_dense(&m, [0.0, -1.0], [0.0, 1.0]).unwrap();
        let dense = b.inverse(BlockSolve::Dense).unwrap().to_dense();
        for mode in [BlockSolve::FirstSchur, BlockSolve::SecondSchur] {
            assert!(err(&b.inverse(mode).unwrap().to_dense(), &dense) <= 1e-12);
        }
        assert!(err(&dense, &dense_inverse(&m)) <= 1e-12);
        let inv = b.inverse(BlockSolve::Dense).unwrap();
        assert_eq!(inv.domain(), [0.0, 1.0]);
        assert!(b.compose(&inv).is_ok());
        assert!(matches!(b.compose(&b), Err(Error::DimensionMismatch(_))));
        assert_eq!(b.pairing_dual().pairing_dual(), b);
    }

    #[test]
    fn first_stage_trivial_and_cross_module() {
        let mut ens = Ensemble::new(2);
        let h = ens.hermitian(6, 5.0);
        let z = c(0.4, 1.5);
        let zero = TwofoldSystem::new(h.clone(), ChargeMap::zero(6, 6), ExtensionParameter::scalar(1.0, 6), None, 0.5).unwrap();
        assert!(err(&zero.first_stage_resolvent(z).unwrap(), &h.resolvent(z).unwrap()) <= 1e-15);

        let a = ens.charge_map(6, 6, 1.0);
        let mu = 0.7;
        let sys = TwofoldSystem::new(h.clone(), a.clone(), ExtensionParameter::scalar(mu, 6), Some(-8.0), 0.5).unwrap();
        let k = KreinFamily::new(h.clone(), a.clone(), Some(-8.0)).unwrap();
        let via_krein = k.krein_resolvent(&ExtensionParameter::scalar(-mu, 6), z).unwrap();
        assert!(err(&sys.first_stage_resolvent(z).unwrap(), &via_krein) <= 1e-12);

        let s = system(3);
        let k = KreinFamily::new(s.h().clone(), s.a().clone(), Some(s.lambda0())).unwrap();
        for z in zpoints() {
            let via_krein = k.krein_resolvent(&s.t().negated(), z).unwrap();
            assert!(err(&s.first_stage_resolvent(z).unwrap(), &via_krein) <= 1e-11);
        }
    }

    #[test]
    fn hat_g_forms_and_lemma_cap() {
        let s = system(4);
        for z in zpoints() {
            let hg = s.hat_g(z).unwrap();
            assert!(err(&hg.first_form, &hg.second_form) <= 1e-11);
            assert!(err(&hg.decomposed.assemble(s.family().g()), &hg.second_form) <= 1e-11);
            assert!(s.lemma_cap_residual(z).unwrap() <= 1e-11);
        }
        let mut ens = Ensemble::new(5);
        let h = ens.hermitian(5, 3.0);
        let trivial = TwofoldSystem::new(h.clone(), ChargeMap::zero(5, 5), ExtensionParameter::scalar(1.0, 5), None, 0.5).unwrap();
        let z = c(0.0, 1.0);
        assert!(err(&trivial.hat_g(z).unwrap().first_form, &h.resolvent(z).unwrap()) <= 1e-15);
    }

    #[test]
    fn sigma_hat_g_two_routes() {
        let s = system(6);
        for z in zpoints() {
            assert!(err(&s.sigma_hat_g(z).unwrap(), &s.sigma_hat_g_assembled(z).unwrap()) <= 1e-11);
        }
        let mut ens = Ensemble::new(7);
        let h = ens.hermitian(5, 3.0);
        let trivial = TwofoldSystem::new(h.clone(), ChargeMap::zero(5, 5), ExtensionParameter::scalar(1.0, 5), None, 0.5).unwrap();
        let z = c(1.0, 1.0);
        let expected = h.resolvent(z).unwrap() - linalg::identity(5);
        assert!(err(&trivial.sigma_hat_g(z).unwrap(), &expected) <= 1e-15);
        assert!(err(&trivial.sigma_hat_g_assembled(z).unwrap(), &expected) <= 1e-15);
    }

    #[test]
    fn decoupled_block_gives_shifted_resolvent() {
        // A = 0: Ĥ_T = H + T, and the block algebra collapses to (−(H + μ) + z)^{-1}
        let mut ens = Ensemble::new(8);
        let h = ens.hermitian(5, 3.0);
        let mu = 1.3;
        let sys = TwofoldSystem::new(h.clone(), ChargeMap::zero(5, 5), ExtensionParameter::scalar(mu, 5), None, 0.5).unwrap();
        let z = c(0.2, 0.9);
        assert!(err(&sys.twofold_resolvent(z).unwrap(), &h.resolvent(z - mu).unwrap()) <= 1e-12);
    }

    #[test]
    fn twofold_matches_composition_and_symmetry() {
        let s = system(9);
        let hat_t = s.hat_h0() + s.t().matrix();
        for z in zpoints() {
            let k = s.twofold_resolvent(z).unwrap();
            assert!(err(&k, &s.res_t_composition(z).unwrap()) <= 1e-9);
            assert!(err(&k, &resolvent_of(&hat_t, z)) <= 1e-9);
            assert!(err(&k.adjoint(), &s.twofold_resolvent(z.conj()).unwrap()) <= 1e-11);
            for mode in [BlockSolve::FirstSchur, BlockSolve::SecondSchur] {
                assert!(err(&k, &s.twofold_resolvent_with(z, mode).unwrap()) <= 1e-9);
            }
            assert!(err(&k, &s.kbb_resolvent(z).unwrap()) <= 1e-9);
            assert!(err(&k, &s.stage2_resolvent(z).unwrap()) <= 1e-9);
        }
        let rec = s.reconstructed_hamiltonian(c(0.0, 1.0)).unwrap();
        assert!(linalg::hermitian_residual(&rec) <= 1e-9);
    }

    #[test]
    fn twofold_pseudo_resolvent() {
        let s = system(10);
        let (z, w) = (c(1.0, 2.0), c(-2.0, -0.5));
        let kz = s.twofold_resolvent(z).unwrap();
        let kw = s.twofold_resolvent(w).unwrap();
        assert!(err(&(&kz - &kw), &(&kz * &kw * (w - z))) <= 1e-10);
    }

    #[test]
    fn factorization_trivial_and_scalar() {
        let mut ens = Ensemble::new(11);
        let h = ens.hermitian(4, 2.0);
        let sys = TwofoldSystem::new(h.clone(), ChargeMap::zero(4, 4), ExtensionParameter::scalar(0.0, 4), Some(-5.0), 0.5).unwrap();
        let expected = linalg::scalar(4, c(-5.0, 0.0)) - h.matrix();
        assert!(err(&sys.hat_h0_factorized().unwrap(), &expected) <= 1e-15);

        let (hv, av, l0) = (0.8, c(0.3, -0.4), -2.0);
        let h1 = SpectralOperator::diagonal(&[hv]).unwrap();
        let a1 = ChargeMap::new(CMat::from_element(1, 1, av)).unwrap();
        let sys = TwofoldSystem::new(h1, a1, ExtensionParameter::scalar(0.0, 1), Some(l0), 0.5).unwrap();
        let g = av.conj() / (l0 - hv);
        let expected = (1.0 - g.conj()) * (l0 - hv) * (1.0 - g);
        assert!((sys.hat_h0_factorized().unwrap()[(0, 0)] - expected).norm() <= 1e-15);
    }

    #[test]
    fn factorization_random_semibounded() {
        let s = system(12);
        let zero = s.with_t(ExtensionParameter::scalar(0.0, 8)).unwrap();
        let fact = zero.hat_h0_factorized().unwrap();
        let shifted = linalg::scalar(8, c(zero.lambda0(), 0.0)) - zero.hat_h0();
        assert!(err(&fact, &shifted) <= 1e-10);
        assert!(err(&dense_inverse(&fact), &zero.hat_h0_inverse().unwrap()) <= 1e-10);
        let at_l0 = zero.twofold_resolvent(c(zero.lambda0(), 0.0)).unwrap();
        assert!(err(&dense_inverse(&fact), &at_l0) <= 1e-9);
        assert!(linalg::min_eigenvalue(&zero.hat_h0()) > zero.lambda0());
    }

    #[test]
    fn non_contractive_g_refused() {
        let mut ens = Ensemble::new(13);
        let h = ens.hermitian(4, 1.0);
        let a = ens.charge_map(4, 4, 5.0);
        let sys = TwofoldSystem::new(h.clone(), a, ExtensionParameter::scalar(1.0, 4), Some(h.min_eigenvalue() - 0.1), 0.5).unwrap();
        assert!(matches!(sys.hat_h0_factorized(), Err(Error::GNotContractive { .. })));
    }

    #[test]
    fn res_t_cases() {
        let s = system(14);
        let z = c(0.5, 1.0);
        let zero = s.with_t(ExtensionParameter::scalar(0.0, 8)).unwrap();
        assert!(err(&zero.res_t_composition(z).unwrap(), &zero.hat_r0(z).unwrap()) <= 1e-12);
        let mu = 0.4;
        let shifted = s.with_t(ExtensionParameter::scalar(mu, 8)).unwrap();
        assert!(err(&shifted.res_t_composition(z).unwrap(), &zero.hat_r0(z - mu).unwrap()) <= 1e-10);
        let dense = resolvent_of(&(s.hat_h0() + s.t().matrix()), z);
        assert!(err(&s.res_t_composition(z).unwrap(), &dense) <= 1e-10);
    }

    #[test]
    fn block_theta_inverse_properties() {
        let s = system(15);
        let zero = s.with_t(ExtensionParameter::scalar(0.0, 8)).unwrap();
        let inv0 = zero.block_theta_inverse().unwrap();
        assert!(err(inv0.block(0, 0), &zero.hat_h0_inverse().unwrap()) <= 1e-12);

        let theta = s.block_theta().unwrap();
        let inv = s.block_theta_inverse().unwrap();
        let one = BlockOperator::from_dense(&linalg::identity(16), [0.0, 1.0], [0.0, 1.0]).unwrap();
        let prod = theta.compose(&inv).unwrap();
        let diff = BlockOperator::from_dense(&(prod.to_dense() - one.to_dense()), [0.0, 1.0], [0.0, 1.0]).unwrap();
        assert!(diff.weighted_norm(s.h()) <= 1e-9);
        assert!(err(&inv.to_dense(), &dense_inverse(&theta.to_dense())) <= 1e-9);

        // self-duality under ⟨·,·⟩_{−1,1}, checked through an explicit weighted pairing
        let dual = inv.pairing_dual();
        assert_eq!(dual.domain(), inv.domain());
        assert!(err(&dual.to_dense(), &inv.to_dense()) <= 1e-9 * linalg::op_norm(&inv.to_dense()));
        let mut ens = Ensemble::new(16);
        let (u, v) = (ens.column(16), ens.column(16));
        let pairing = |lhs: &CMat, lhs_tags: [f64; 2], rhs: &CMat| {
            let mut acc = c(0.0, 0.0);
            for (k, tag) in lhs_tags.iter().enumerate() {
                let wl = s.h().weight(*tag);
                let wr = s.h().weight(-tag);
                let a = &wl * lhs.rows(8 * k, 8);
                let b = &wr * rhs.rows(8 * k, 8);
                acc += (a.adjoint() * b)[(0, 0)];
            }
            acc
        };
        let m = inv.to_dense();
        let lhs = pairing(&(&m * &u), inv.codomain(), &v);
        let rhs = pairing(&u, inv.domain(), &(&m * &v));
        assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));

        let tt = s.tt_resolvent().unwrap();
        let z = c(s.lambda0(), 0.0);
        assert!(err(&tt, &s.res_t_composition(z).unwrap()) <= 1e-9);
        assert!(err(&tt, &s.twofold_resolvent(z).unwrap()) <= 1e-9);
    }

    #[test]
    fn gamma_search_cases() {
        let mut ens = Ensemble::new(17);
        let h = ens.hermitian(5, 3.0);
        let zero = TwofoldSystem::new(h, ChargeMap::zero(5, 5), ExtensionParameter::scalar(1.0, 5), None, 0.5).unwrap();
        assert_eq!(zero.neumann_gamma_search().unwrap().gamma, 1.0);

        let h = SpectralOperator::diagonal(&(1..=10).map(f64::from).collect::<Vec<_>>()).unwrap();
        let mut a = CMat::zeros(10, 10);
        a.row_mut(0).fill(c(1.0, 0.0));
        let sys = TwofoldSystem::new(h, ChargeMap::new(a).unwrap(), ExtensionParameter::scalar(1.0, 10), None, 0.5).unwrap();
        let cert = sys.neumann_gamma_search().unwrap();
        assert!(cert.decay_certified());
        assert!(cert.g_norm < 1.0 && cert.g_adj_norm < 1.0);
        let norm_at = |g: f64| linalg::op_norm(&sys.family().gz(c(0.0, g)).unwrap());
        let rate = (norm_at(2f64.powi(20)) / norm_at(2f64.powi(10))).ln() / (2f64.powi(10)).ln();
        assert!(rate <= sys.scale_index() - 1.0 + 1e-6, "rate {rate}");

        let s = system(18);
        let cert = s.neumann_gamma_search().unwrap();
        assert!(cert.gamma.is_finite() && cert.g_norm < 1.0 && cert.decay_certified());
    }

    #[test]
    fn symmetric_only_records_relative_bound() {
        let s = system(19);
        let bound = s.relative_bound().unwrap();
        assert!(bound < 1.0 && bound > 0.0);
        let mut ens = Ensemble::new(20);
        let h = ens.hermitian(6, 2.0);
        let a = ens.charge_map(6, 6, 0.5);
        let big = ExtensionParameter::symmetric_only(ens.hermitian_matrix(6, 500.0)).unwrap();
        assert!(matches!(
            TwofoldSystem::semibounded(h, a, big, 0.5, 0.5),
            Err(Error::RelativeBoundTooLarge { .. })
        ));
    }

    #[test]
    fn lambda0_independence() {
        let s = system(21);
        for lambda in [s.lambda0() - 7.0, s.lambda0() - 40.0] {
            let moved = s.rebuilt_at(lambda).unwrap();
            let via_g = s.family().g().adjoint() * s.family().gz(c(lambda, 0.0)).unwrap() * c(lambda - s.lambda0(), 0.0);
            assert!(err(&s.t_lambda(lambda).unwrap(), &via_g) <= 1e-11);
            for z in zpoints() {
                assert!(err(&s.twofold_resolvent(z).unwrap(), &moved.twofold_resolvent(z).unwrap()) <= 1e-9);
            }
            let a = s.hat_h0() + s.t().matrix();
            let b = moved.hat_h0() + moved.t().matrix();
            assert!(err(&a, &b) <= 1e-9);
        }
    }

    #[test]
    fn s_cross_t_symmetric_and_equal_to_hat_h() {
        let s = system(22);
        let mut ens = Ensemble::new(23);
        let samples: Vec<_> = (0..20).map(|_| (ens.column(8), ens.column(8))).collect();
        assert!(s.s_cross_t_symmetry(&samples) <= 1e-10);
        let hat_t = s.hat_h0() + s.t().matrix();
        let p = &samples[0].0;
        assert!(err(&s.apply_s_cross_t(&s.s_cross_t_domain(p)), &(hat_t * p)) <= 1e-10);
    }

    #[test]
    fn singular_t_scans_for_hat_lambda0() {
        let s = system(24);
        let zero = s.with_t(ExtensionParameter::scalar(0.0, 8)).unwrap();
        assert!(zero.hat_lambda0().unwrap() < zero.lambda0());
        assert_eq!(s.hat_lambda0(), Some(s.lambda0()));
        let z = c(0.3, 2.0);
        assert!(err(&zero.stage2_resolvent(z).unwrap(), &zero.twofold_resolvent(z).unwrap()) <= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn equivalence_on_random_instances(seed in any::<u64>(), re in -12.0..12.0f64, im in 0.1..6.0f64) {
            let s = system(seed);
            for z in [c(re, im), c(re, -im)] {
                let k = s.twofold_resolvent(z).unwrap();
                prop_assert!(err(&k, &s.res_t_composition(z).unwrap()) <= 1e-9);
                prop_assert!(s.lemma_cap_residual(z).unwrap() <= 1e-11);
            }
        }
    }
}
