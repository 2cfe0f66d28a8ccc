//! Truncated Nelson model: particles on a periodic grid coupled to a scalar boson field
//! with finitely many modes and at most B bosons.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krein::ExtensionParameter;
use crate::linalg::{self, c, CMat, C64};
use crate::quadrature::{integrate, Integral};
use crate::renorm::{approx_hamiltonians, theorem_bb_driver, ConvergenceReport, CutoffFamily};
use crate::scale::{ChargeMap, SpectralOperator};
use crate::twofold::TwofoldSystem;

/// Box length of the particle grid; the boson mode spacing is 2π/L = 1.
pub const BOX_LENGTH: f64 = 2.0 * PI;
pub const NELSON_LAMBDA0: f64 = -1.0;
pub const NELSON_SCALE: f64 = 0.5;
pub const COUNTERTERM_REL_TOL: f64 = 1e-12;

fn default_particles() -> usize {
    1
}
fn default_budget() -> usize {
    5000
}
fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NelsonTruncConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "N", default = "default_particles")]
    pub n: usize,
    pub g: f64,
    pub schedule: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// spatial dimension of the grids, 1 or 3
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl Default for NelsonTruncConfig {
    fn default() -> Self {
        Self::minimal()
    }
}

impl NelsonTruncConfig {
    /// K = 4, B = 1, P = 2, N = 1, g = 1 with radii 0, 1, 2, 3.
    pub fn minimal() -> Self {
        Self { k: 4, b: 1, p: 2, n: 1, g: 1.0, schedule: vec![0.0, 1.0, 2.0, 3.0], budget: 5000, dim: 1 }
    }

    pub fn modes(&self) -> usize {
        self.k.pow(self.dim as u32)
    }

    /// P^(dim·N) · Σ_{b≤B} multiset(K^dim, b), saturating.
    pub fn fock_dimension(&self) -> u128 {
        let modes = self.modes() as u128;
        let mut sectors: u128 = 0;
        let mut term: u128 = 1;
        for b in 0..=self.b as u128 {
            // multiset(m, b) = multiset(m, b−1)·(m+b−1)/b
            if let Some(next) = term.saturating_mul(modes + b.max(1) - 1).checked_div(b) {
                term = next;
            }
            sectors = sectors.saturating_add(term);
        }
        (self.p as u128).saturating_pow((self.dim * self.n) as u32).saturating_mul(sectors)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 3 {
            return Err(Error::InvalidInput(format!("dim: must be 1 or 3, got {}", self.dim)));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("K: need at least one mode".into()));
        }
        if self.b == 0 {
            return Err(Error::InvalidInput("B: must be >= 1".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("P: must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("N: must be >= 1".into()));
        }
        if !self.g.is_finite() {
            return Err(Error::InvalidInput("g: must be finite".into()));
        }
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("schedule: must be nonempty and strictly increasing".into()));
        }
        let dim = self.fock_dimension();
        if dim > self.budget as u128 {
            return Err(Error::BudgetExceeded { dim: dim.min(usize::MAX as u128) as usize, budget: self.budget });
        }
        Ok(())
    }
}

/// (2π)^(−d/2)(|κ|²+1)^(−1/4).
pub fn form_factor(kappa: f64, dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0) * (kappa * kappa + 1.0).powf(-0.25)
}

pub fn dispersion(kappa: f64) -> f64 {
    (kappa * kappa + 1.0).sqrt()
}

/// Occupation vectors over `modes` modes with total ≤ `max`, ordered by total then lexicographically descending.
fn occupations(modes: usize, max: usize) -> Vec<Vec<usize>> {
    fn fill(modes: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == modes {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            fill(modes, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=max {
        fill(modes, total, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone)]
pub struct NelsonModel {
    cfg: NelsonTruncConfig,
    h_free: SpectralOperator,
    /// per mode: |κ|, and κ as a dim-vector
    radii: Vec<f64>,
    kappas: Vec<Vec<f64>>,
    /// per particle configuration: positions of each particle, flattened (N·dim)
    positions: Vec<Vec<f64>>,
    occupations: Vec<Vec<usize>>,
}

/// Assembles H_free, the mode grid and the Fock bookkeeping.
pub fn nelson_build(cfg: &NelsonTruncConfig) -> Result<NelsonModel> {
    cfg.validate()?;
    let d = cfg.dim;
    let dk = 2.0 * PI / BOX_LENGTH;
    let modes = cfg.modes();
    let kappas: Vec<Vec<f64>> = (0..modes)
        .map(|m| (0..d).map(|axis| dk * ((m / cfg.k.pow(axis as u32)) % cfg.k) as f64).collect())
        .collect();
    let radii: Vec<f64> = kappas.iter().map(|k| k.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let occ = occupations(modes, cfg.b);
    let boson: Vec<f64> = occ.iter().map(|o| o.iter().zip(&radii).map(|(&n, &r)| n as f64 * dispersion(r)).sum()).collect();

    // one axis: plane waves e^{ipx}/√P with p = 2π/L·(j − P/2)
    let p = cfg.p;
    let x: Vec<f64> = (0..p).map(|j| j as f64 * BOX_LENGTH / p as f64).collect();
    let mom: Vec<f64> = (0..p).map(|j| 2.0 * PI / BOX_LENGTH * (j as f64 - (p / 2) as f64)).collect();
    let u1 = CMat::from_fn(p, p, |i, j| C64::from_polar(1.0 / (p as f64).sqrt(), x[i] * mom[j]));
    let axes = d * cfg.n;
    let mut u = CMat::identity(1, 1);
    let mut kinetic = vec![0.0];
    let mut positions = vec![Vec::new()];
    for _ in 0..axes {
        u = linalg::kron(&u, &u1);
        kinetic = kinetic.iter().flat_map(|&k| mom.iter().map(move |q| k + q * q)).collect();
        positions = positions
            .iter()
            .flat_map(|pos| x.iter().map(move |&xi| {
                let mut next = pos.clone();
                next.push(xi);
                next
            }))
            .collect();
    }
    let basis = linalg::kron(&u, &CMat::identity(occ.len(), occ.len()));
    let eigenvalues: Vec<f64> = kinetic.iter().flat_map(|&k| boson.iter().map(move |&w| k + w)).collect();
    let h_free = SpectralOperator::new(eigenvalues, basis)?;
    Ok(NelsonModel { cfg: cfg.clone(), h_free, radii, kappas, positions, occupations: occ })
}

impl NelsonModel {
    pub fn config(&self) -> &NelsonTruncConfig {
        &self.cfg
    }

    pub fn h_free(&self) -> &SpectralOperator {
        &self.h_free
    }

    pub fn dim(&self) -> usize {
        self.h_free.dim()
    }

    pub fn fock_dim(&self) -> usize {
        self.occupations.len()
    }

    pub fn particle_dim(&self) -> usize {
        self.positions.len()
    }

    pub fn mode_radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn occupations(&self) -> &[Vec<usize>] {
        &self.occupations
    }

    fn fock_index(&self, occ: &[usize]) -> Option<usize> {
        self.occupations.iter().position(|o| o == occ)
    }

    /// Boson annihilator a_m on the truncated Fock space, with √occupation factors.
    pub fn mode_annihilator(&self, m: usize) -> CMat {
        let f = self.fock_dim();
        let mut a = CMat::zeros(f, f);
        for (j, o) in self.occupations.iter().enumerate() {
            if o[m] > 0 {
                let mut lower = o.clone();
                lower[m] -= 1;
                let i = self.fock_index(&lower).expect("lower sector present");
                a[(i, j)] = c((o[m] as f64).sqrt(), 0.0);
            }
        }
        a
    }

    /// Σ_m g·√(Δκ^d)·v̂(κ_m)·Σ_j e^{iκ_m·x_j} ⊗ a_m over the modes with |κ_m| ≤ radius.
    pub fn annihilator(&self, radius: f64) -> ChargeMap {
        let d = self.cfg.dim;
        let dk = 2.0 * PI / BOX_LENGTH;
        let weight = self.cfg.g * dk.powf(d as f64 / 2.0);
        let np = self.particle_dim();
        let mut total = CMat::zeros(self.dim(), self.dim());
        for (m, kappa) in self.kappas.iter().enumerate() {
            if self.radii[m] > radius {
                continue;
            }
            let coupling = weight * form_factor(self.radii[m], d);
            let diag = CMat::from_fn(np, np, |i, j| {
                if i != j {
                    return c(0.0, 0.0);
                }
                let pos = &self.positions[i];
                let phase: C64 = (0..self.cfg.n)
                    .map(|q| {
                        let dot: f64 = (0..d).map(|a| kappa[a] * pos[q * d + a]).sum();
                        C64::from_polar(1.0, dot)
                    })
                    .sum();
                phase * coupling
            });
            total += linalg::kron(&diag, &self.mode_annihilator(m));
        }
        ChargeMap::new(total).expect("square finite matrix")
    }

    /// A with every mode of the grid.
    pub fn full_annihilator(&self) -> ChargeMap {
        self.annihilator(f64::INFINITY)
    }

    /// 1 ⊗ dΓ(1).
    pub fn number_operator(&self) -> CMat {
        let counts: Vec<f64> = self.occupations.iter().map(|o| o.iter().sum::<usize>() as f64).collect();
        linalg::kron(&CMat::identity(self.particle_dim(), self.particle_dim()), &linalg::diag_real(&counts))
    }

    /// Indices of basis vectors in the top boson sector.
    pub fn top_sector(&self) -> Vec<usize> {
        let f = self.fock_dim();
        (0..self.dim())
            .filter(|i| self.occupations[i % f].iter().sum::<usize>() == self.cfg.b)
            .collect()
    }

    /// ⟨Ω|A_n H_free⁺ A_n†|Ω⟩ with Ω = vacuum ⊗ constant particle wave function.
    pub fn discrete_counterterm(&self, radius: f64) -> f64 {
        let a = self.annihilator(radius);
        let f = self.fock_dim();
        let np = self.particle_dim();
        let mut omega = CMat::zeros(self.dim(), 1);
        for i in 0..np {
            omega[(i * f, 0)] = c(1.0 / (np as f64).sqrt(), 0.0);
        }
        let pinv = self.h_free.functional(|l| c(if l.abs() > 1e-12 { 1.0 / l } else { 0.0 }, 0.0));
        let v = a.star() * &omega;
        (v.adjoint() * pinv * v)[(0, 0)].re
    }
}

pub fn nelson_discrete_counterterm(model: &NelsonModel, radius: f64) -> f64 {
    model.discrete_counterterm(radius)
}

/// g²N·4π(2π)^(−3) ∫₀^n r²(r²+1)^(−1/2)/(r²+(r²+1)^(1/2)) dr.
pub fn nelson_counterterm_integral(radius: f64, g: f64, particles: usize) -> Integral {
    let prefactor = g * g * particles as f64 * 4.0 * PI / (2.0 * PI).powi(3);
    let mut r = integrate(
        |r| {
            let w = (r * r + 1.0).sqrt();
            r * r / (w * (r * r + w))
        },
        0.0,
        radius.max(0.0),
        COUNTERTERM_REL_TOL,
    );
    r.value *= prefactor;
    r.abs_error *= prefactor.abs();
    r
}

pub fn nelson_counterterm(radius: f64, g: f64, particles: usize) -> f64 {
    nelson_counterterm_integral(radius, g, particles).value
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateRow {
    pub index: f64,
    pub counterterm: f64,
    pub renormalized: f64,
    pub bare: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NelsonReport {
    pub dim: usize,
    pub gamma_star: f64,
    pub convergence: ConvergenceReport,
    pub ablated: ConvergenceReport,
    pub ground_states: Vec<GroundStateRow>,
    pub renormalized_drift: f64,
    pub bare_drift: f64,
    /// e at iγ* and the final index: with E_n and with E_n ≡ 0
    pub final_e: f64,
    pub final_e_ablated: f64,
    pub ablation_factor: f64,
    /// ‖R̂_{T}(iγ*) − (−(H_{n_max}+E_{n_max})+iγ*)^{-1}‖, T = T_{n_max}
    pub form_residual: f64,
    pub last_cauchy: f64,
}

/// Cutoff family (A_n, E_n·1) of the model along the configured schedule.
pub fn nelson_family(model: &NelsonModel) -> Result<CutoffFamily> {
    let n = model.dim();
    let a = model.full_annihilator();
    let maps: Vec<ChargeMap> = model.cfg.schedule.iter().map(|&r| model.annihilator(r)).collect();
    let terms: Vec<CMat> = model
        .cfg
        .schedule
        .iter()
        .map(|&r| linalg::scalar(n, c(model.discrete_counterterm(r), 0.0)))
        .collect();
    CutoffFamily::new(model.cfg.schedule.clone(), maps, terms, &a, model.h_free())
}

pub fn nelson_experiment(cfg: &NelsonTruncConfig) -> Result<NelsonReport> {
    if cfg.schedule.len() < 4 {
        return Err(Error::InvalidInput("schedule: need at least 4 indices".into()));
    }
    let model = nelson_build(cfg)?;
    let family = nelson_family(&model)?;
    let h = model.h_free().clone();
    let n = model.dim();
    let zero = ExtensionParameter::scalar(0.0, n);
    let probe = TwofoldSystem::new(h.clone(), model.full_annihilator(), zero, Some(NELSON_LAMBDA0), NELSON_SCALE)?;
    let r = probe.family().r0().clone();
    let last = family.len() - 1;
    let t = linalg::hermitian_part(&family.t_n(last, &r));
    let system = probe.with_t(ExtensionParameter::self_adjoint(t.clone())?)?;
    let gamma = system.neumann_gamma_search()?.gamma;

    let convergence = theorem_bb_driver(&system, &family, Some(&t), None)?;
    let ablated = theorem_bb_driver(&system, &family.without_counterterms(), Some(&t), Some(&convergence_points(&convergence)))?;

    let ground_states: Vec<GroundStateRow> = (0..family.len())
        .map(|k| {
            let (h_n, _) = approx_hamiltonians(&h, family.a_n(k), &r);
            let e = family.e_n(k)[(0, 0)].re;
            GroundStateRow {
                index: family.indices()[k],
                counterterm: e,
                renormalized: linalg::min_eigenvalue(&(&h_n + family.e_n(k))),
                bare: linalg::min_eigenvalue(&h_n),
            }
        })
        .collect();
    let top = &ground_states[last];
    let prev = &ground_states[last - 1];
    let renormalized_drift = (top.renormalized - prev.renormalized).abs();
    let bare_drift = (top.bare - prev.bare).abs();

    let final_e = convergence.rows[last].e[0];
    let final_e_ablated = ablated.rows[last].e[0];
    let z = c(0.0, gamma);
    let (h_max, _) = approx_hamiltonians(&h, family.a_n(last), &r);
    let direct = linalg::inverse_checked(&(linalg::scalar(n, z) - h_max - family.e_n(last)), linalg::COND_LIMIT)
        .map_err(|_| Error::SpectrumHit { z, gap: 0.0 })?;
    let form_residual = linalg::op_norm(&(system.twofold_resolvent(z)? - direct));
    Ok(NelsonReport {
        dim: n,
        gamma_star: gamma,
        last_cauchy: convergence.rows[last].cauchy[0],
        ablation_factor: final_e_ablated / final_e.max(f64::MIN_POSITIVE),
        convergence,
        ablated,
        ground_states,
        renormalized_drift,
        bare_drift,
        final_e,
        final_e_ablated,
        form_residual,
    })
}

fn convergence_points(report: &ConvergenceReport) -> Vec<C64> {
    report.z_points.iter().map(|p| c(p[0], p[1])).collect()
}
