//! Regular approximations: the (Σ_n, Θ_n) driver, cutoff/counterterm families for the
//! twofold construction, and norm-resolvent convergence reports.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::krein::{ExtensionParameter, KreinFamily};
use crate::linalg::{self, c, CMat, C64, COND_LIMIT};
use crate::scale::{scale_norm, ChargeMap, SpectralOperator};
use crate::twofold::TwofoldSystem;

const MONOTONE_SLACK: f64 = 1e-12;

/// (Θ target, (Σ_n, Θ_n) per index, indices).
pub type Schedule = (ExtensionParameter, Vec<(ChargeMap, ExtensionParameter)>, Vec<f64>);

/// (‖T_n − T‖, d per z, e per z, resolvents of H_n + E_n, relative bound).
type BbRow = (f64, Vec<f64>, Vec<f64>, Vec<CMat>, f64);

/// Indexed (A_n, E_n) with n strictly increasing and ‖A_n − A‖_{𝔥₁→𝔉} nonincreasing.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    indices: Vec<f64>,
    maps: Vec<ChargeMap>,
    counterterms: Vec<CMat>,
    a_diff: Vec<f64>,
}

impl CutoffFamily {
    pub fn new(
        indices: Vec<f64>,
        maps: Vec<ChargeMap>,
        counterterms: Vec<CMat>,
        reference: &ChargeMap,
        h: &SpectralOperator,
    ) -> Result<Self> {
        if indices.is_empty() || indices.len() != maps.len() || indices.len() != counterterms.len() {
            return Err(Error::InvalidInput("cutoff family needs matching, nonempty indices/maps/counterterms".into()));
        }
        if indices.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("cutoff indices must be strictly increasing".into()));
        }
        let n = h.dim();
        for (a, e) in maps.iter().zip(&counterterms) {
            if a.dim() != n || a.target_dim() != n {
                return Err(Error::DimensionMismatch("A_n must be dim x dim".into()));
            }
            linalg::check_square("E_n", e, n)?;
            let residual = linalg::hermitian_residual(e);
            if residual > 1e-12 * linalg::op_norm(e).max(1.0) {
                return Err(Error::NotHermitian { residual });
            }
        }
        let a_diff = maps
            .iter()
            .map(|a| scale_norm(&(a.matrix() - reference.matrix()), h, 1.0, None, 0.0))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = a_diff.windows(2).position(|w| w[1] > w[0] * (1.0 + MONOTONE_SLACK) + MONOTONE_SLACK) {
            return Err(Error::InvalidInput(format!(
                "cutoff not monotone: |A_n - A| grows from {} to {} at position {}",
                a_diff[k],
                a_diff[k + 1],
                k + 1
            )));
        }
        Ok(Self { indices, maps, counterterms, a_diff })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    pub fn a_n(&self, k: usize) -> &ChargeMap {
        &self.maps[k]
    }

    pub fn e_n(&self, k: usize) -> &CMat {
        &self.counterterms[k]
    }

    /// ‖A_n − A‖_{𝔥₁→𝔉}.
    pub fn a_diff(&self, k: usize) -> f64 {
        self.a_diff[k]
    }

    /// T_n = A_n R A_n† + E_n.
    pub fn t_n(&self, k: usize, r: &CMat) -> CMat {
        let a = self.maps[k].matrix();
        a * r * a.adjoint() + &self.counterterms[k]
    }

    /// (H_n, H̃_n) at schedule position k.
    pub fn approx_hamiltonians(&self, k: usize, h: &SpectralOperator, r: &CMat) -> (CMat, CMat) {
        approx_hamiltonians(h, &self.maps[k], r)
    }

    /// Same maps with every E_n set to zero.
    pub fn without_counterterms(&self) -> Self {
        let zeros = self.counterterms.iter().map(|e| CMat::zeros(e.nrows(), e.ncols())).collect();
        Self { counterterms: zeros, ..self.clone() }
    }
}

/// H_n = H + A_n† + A_n and H̃_n = H_n − A_n R A_n†.
pub fn approx_hamiltonians(h: &SpectralOperator, a_n: &ChargeMap, r: &CMat) -> (CMat, CMat) {
    let a = a_n.matrix();
    let h_n = h.matrix() + a + a.adjoint();
    let subtracted = &h_n - a * r * a.adjoint();
    (h_n, subtracted)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub index: f64,
    pub norm_a_diff: f64,
    pub norm_t_diff: f64,
    /// one entry per evaluation point
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    /// ‖K_n(z) − K_{n−1}(z)‖ of the approximating resolvents, 0 on the first row
    pub cauchy: Vec<f64>,
    pub relative_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub z_points: Vec<[f64; 2]>,
    pub rows: Vec<ConvergenceRow>,
    pub d_strictly_decreasing: Vec<bool>,
    pub e_strictly_decreasing: Vec<bool>,
    /// sup over indices of the relative-bound surrogate, when computed
    pub hy1_sup: Option<f64>,
    pub hy1_below_one: Option<bool>,
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Format used for every float in CSV output (17 significant digits).
pub fn fmt_sci(v: f64) -> String {
    format!("{v:.16e}")
}

impl ConvergenceReport {
    fn assemble(z: &[C64], rows: Vec<ConvergenceRow>, with_e: bool) -> Self {
        let column = |f: &dyn Fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let d_strictly_decreasing = (0..z.len()).map(|j| strictly_decreasing(&column(&|r| r.d[j]))).collect();
        let e_strictly_decreasing = if with_e {
            (0..z.len()).map(|j| strictly_decreasing(&column(&|r| r.e[j]))).collect()
        } else {
            Vec::new()
        };
        let bounds: Vec<f64> = rows.iter().filter_map(|r| r.relative_bound).collect();
        let hy1_sup = (!bounds.is_empty()).then(|| bounds.iter().copied().fold(0.0, f64::max));
        Self {
            z_points: z.iter().map(|z| [z.re, z.im]).collect(),
            rows,
            d_strictly_decreasing,
            e_strictly_decreasing,
            hy1_sup,
            hy1_below_one: hy1_sup.map(|s| s < 1.0),
        }
    }

    pub fn has_e(&self) -> bool {
        self.rows.first().is_some_and(|r| !r.e.is_empty())
    }

    /// Header: n, norm_A_diff, norm_T_diff, d_n_z{j}..., [e_n_z{j}...], cauchy_z{j}..., [rel_bound].
    pub fn csv_header(&self) -> Vec<String> {
        let nz = self.z_points.len();
        let mut h = vec!["n".to_string(), "norm_A_diff".to_string(), "norm_T_diff".to_string()];
        h.extend((0..nz).map(|j| format!("d_n_z{j}")));
        if self.has_e() {
            h.extend((0..nz).map(|j| format!("e_n_z{j}")));
        }
        h.extend((0..nz).map(|j| format!("cauchy_z{j}")));
        if self.hy1_sup.is_some() {
            h.push("rel_bound".to_string());
        }
        h
    }

    pub fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut rec = vec![fmt_sci(r.index), fmt_sci(r.norm_a_diff), fmt_sci(r.norm_t_diff)];
                rec.extend(r.d.iter().map(|&v| fmt_sci(v)));
                if self.has_e() {
                    rec.extend(r.e.iter().map(|&v| fmt_sci(v)));
                }
                rec.extend(r.cauchy.iter().map(|&v| fmt_sci(v)));
                if self.hy1_sup.is_some() {
                    rec.push(fmt_sci(r.relative_bound.unwrap_or(f64::NAN)));
                }
                rec
            })
            .collect()
    }

    pub fn d_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.d[j]).collect()
    }

    pub fn e_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.e[j]).collect()
    }

    pub fn all_finite_nonnegative(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.norm_a_diff, r.norm_t_diff]
                .iter()
                .chain(&r.d)
                .chain(&r.e)
                .chain(&r.cauchy)
                .chain(r.relative_bound.iter())
                .all(|v| v.is_finite() && *v >= 0.0)
        })
    }
}

fn dense_resolvent(m: &CMat, z: C64) -> Result<CMat> {
    let shifted = linalg::scalar(m.nrows(), z) - m;
    linalg::inverse_checked(&shifted, COND_LIMIT).map_err(|_| Error::SpectrumHit { z, gap: 0.0 })
}

fn cauchy_rows(resolvents: &[Vec<CMat>]) -> Vec<Vec<f64>> {
    resolvents
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(j, r)| if k == 0 { 0.0 } else { linalg::op_norm(&(r - &resolvents[k - 1][j])) })
                .collect()
        })
        .collect()
}

/// Drives H + Σ_n†Θ_n^{-1}Σ_n towards H_Θ and reports the parameter increments and resolvent distances.
pub fn theorem_conv_driver(
    family: &KreinFamily,
    theta: &ExtensionParameter,
    schedule: &[(ChargeMap, ExtensionParameter)],
    indices: &[f64],
    z: &[C64],
) -> Result<ConvergenceReport> {
    if schedule.len() != indices.len() || schedule.is_empty() {
        return Err(Error::InvalidInput("schedule and indices must match and be nonempty".into()));
    }
    let targets = z.iter().map(|&z| family.krein_resolvent(theta, z)).collect::<Result<Vec<_>>>()?;
    let h = family.h();
    let r = family.r0();
    let per_index = schedule
        .par_iter()
        .enumerate()
        .map(|(k, (sigma_n, theta_n))| -> Result<(f64, f64, Vec<CMat>)> {
            if sigma_n.dim() != h.dim() || sigma_n.target_dim() != family.target_dim() || theta_n.dim() != family.target_dim() {
                return Err(Error::DimensionMismatch(format!("schedule entry {k} has wrong shape")));
            }
            let a_diff = scale_norm(&(sigma_n.matrix() - family.sigma().matrix()), h, 1.0, None, 0.0)?;
            let s = sigma_n.matrix();
            let t_diff = linalg::op_norm(&(theta_n.matrix() - s * r * s.adjoint() - theta.matrix()));
            let inv = linalg::inverse_checked(theta_n.matrix(), COND_LIMIT).map_err(|_| Error::ThetaSingular { index: k })?;
            let h_n = h.matrix() + s.adjoint() * inv * s;
            let res = z.iter().map(|&z| dense_resolvent(&h_n, z)).collect::<Result<Vec<_>>>()?;
            Ok((a_diff, t_diff, res))
        })
        .collect::<Result<Vec<_>>>()?;
    let resolvents: Vec<Vec<CMat>> = per_index.iter().map(|p| p.2.clone()).collect();
    let cauchy = cauchy_rows(&resolvents);
    let rows = per_index
        .into_iter()
        .zip(cauchy)
        .enumerate()
        .map(|(k, ((a_diff, t_diff, res), cauchy))| ConvergenceRow {
            index: indices[k],
            norm_a_diff: a_diff,
            norm_t_diff: t_diff,
            d: res.iter().zip(&targets).map(|(a, b)| linalg::op_norm(&(a - b))).collect(),
            e: Vec::new(),
            cauchy,
            relative_bound: None,
        })
        .collect();
    Ok(ConvergenceReport::assemble(z, rows, false))
}

/// ±iγ* and one real point 1 below every spectrum involved in the bb driver.
pub fn default_z_points(system: &TwofoldSystem, family: &CutoffFamily, t: &CMat) -> Result<Vec<C64>> {
    let gamma = system.neumann_gamma_search()?.gamma;
    let r = system.family().r0();
    let mut bottom = system.h().min_eigenvalue();
    let hat_h0 = system.hat_h0();
    bottom = bottom.min(linalg::min_eigenvalue(&hat_h0));
    bottom = bottom.min(linalg::min_eigenvalue(&(&hat_h0 + t)));
    for k in 0..family.len() {
        let (h_n, sub) = family.approx_hamiltonians(k, system.h(), r);
        bottom = bottom.min(linalg::min_eigenvalue(&sub));
        bottom = bottom.min(linalg::min_eigenvalue(&(h_n + family.e_n(k))));
    }
    let mut real = bottom - 1.0;
    if (real - system.lambda0()).abs() < 1e-8 {
        real -= 1.0;
    }
    Ok(vec![c(0.0, gamma), c(0.0, -gamma), c(real, 0.0)])
}

/// Resolvent distances of H̃_n against Ĥ₀ and of H_n + E_n against Ĥ_T, with T defaulting to T_{n_max}.
pub fn theorem_bb_driver(
    system: &TwofoldSystem,
    family: &CutoffFamily,
    t: Option<&CMat>,
    z: Option<&[C64]>,
) -> Result<ConvergenceReport> {
    let n = system.dim();
    let r = system.family().r0().clone();
    let last = family.len() - 1;
    let t = match t {
        Some(t) => t.clone(),
        None => linalg::hermitian_part(&family.t_n(last, &r)),
    };
    let z: Vec<C64> = match z {
        Some(z) => z.to_vec(),
        None => default_z_points(system, family, &t)?,
    };
    let sys0 = system.with_t(ExtensionParameter::scalar(0.0, n))?;
    let sys_t = system.with_t(ExtensionParameter::self_adjoint(t.clone())?)?;
    let hat_r0 = z.iter().map(|&z| sys0.twofold_resolvent(z)).collect::<Result<Vec<_>>>()?;
    let hat_rt = z.iter().map(|&z| sys_t.twofold_resolvent(z)).collect::<Result<Vec<_>>>()?;
    let gamma = system.neumann_gamma_search()?.gamma;
    let h = system.h();
    let per_index = (0..family.len())
        .into_par_iter()
        .map(|k| -> Result<BbRow> {
            let (h_n, sub) = family.approx_hamiltonians(k, h, &r);
            let t_n = family.t_n(k, &r);
            let t_diff = linalg::op_norm(&(&t_n - &t));
            let renorm = &h_n + family.e_n(k);
            let mut d = Vec::with_capacity(z.len());
            let mut e = Vec::with_capacity(z.len());
            let mut res = Vec::with_capacity(z.len());
            for (j, &zj) in z.iter().enumerate() {
                d.push(linalg::op_norm(&(dense_resolvent(&sub, zj)? - &hat_r0[j])));
                let rr = dense_resolvent(&renorm, zj)?;
                e.push(linalg::op_norm(&(&rr - &hat_rt[j])));
                res.push(rr);
            }
            let bound = linalg::op_norm(&(&t_n * dense_resolvent(&sub, c(0.0, gamma))?));
            Ok((t_diff, d, e, res, bound))
        })
        .collect::<Result<Vec<_>>>()?;
    let resolvents: Vec<Vec<CMat>> = per_index.iter().map(|p| p.3.clone()).collect();
    let cauchy = cauchy_rows(&resolvents);
    let rows = per_index
        .into_iter()
        .zip(cauchy)
        .enumerate()
        .map(|(k, ((t_diff, d, e, _, bound), cauchy))| ConvergenceRow {
            index: family.indices()[k],
            norm_a_diff: family.a_diff(k),
            norm_t_diff: t_diff,
            d,
            e,
            cauchy,
            relative_bound: Some(bound),
        })
        .collect();
    Ok(ConvergenceReport::assemble(&z, rows, true))
}

/// A_n = n·i·A·R_{ni}.
pub fn remark_hz_smoother(system: &TwofoldSystem, n: f64) -> Result<ChargeMap> {
    let z = c(0.0, n);
    ChargeMap::new(system.a().matrix() * system.h().resolvent(z)? * z)
}

/// n_k = ‖H‖·2^k for k = 0..=16 (‖H‖ replaced by 1 when H = 0).
pub fn hz_indices(h: &SpectralOperator) -> Vec<f64> {
    let base = if h.norm() > 0.0 { h.norm() } else { 1.0 };
    (0..=16).map(|k| base * 2f64.powi(k)).collect()
}

/// Cutoff family of `n·i·A·R_{ni}` smoothers with zero counterterms.
pub fn hz_family(system: &TwofoldSystem, indices: &[f64]) -> Result<CutoffFamily> {
    let maps = indices.iter().map(|&n| remark_hz_smoother(system, n)).collect::<Result<Vec<_>>>()?;
    let zeros = vec![CMat::zeros(system.dim(), system.dim()); indices.len()];
    CutoffFamily::new(indices.to_vec(), maps, zeros, system.a(), system.h())
}

/// Schedules for the (Σ_n, Θ_n) driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    /// Σ_n = Σ, Θ_n = Θ + ΣRΣ†
    Exact,
    /// Σ_n = Σ, Θ_n = g_n^{-1}·1 with g_n^{-1} = c + 2^{-k}, target Θ = c·1 − ΣRΣ†
    Grisem,
    /// Σ_n = Σ + 2^{-k}Δ, Θ_n = Θ + Σ_nRΣ_n† + 2^{-k}Ξ with seeded Δ, Ξ
    Shrinking,
}

/// Target Θ and schedule for a scan mode; the returned Θ replaces `theta` in Grisem mode.
pub fn scan_schedule(
    family: &KreinFamily,
    theta: &ExtensionParameter,
    mode: ScanMode,
    steps: usize,
    seed: u64,
) -> Result<Schedule> {
    let r = family.r0();
    let sigma = family.sigma();
    let srs = |s: &CMat| s * r * s.adjoint();
    let indices: Vec<f64> = (0..steps).map(|k| k as f64).collect();
    let m = family.target_dim();
    match mode {
        ScanMode::Exact => {
            let theta_n = theta.shifted(&srs(sigma.matrix()))?;
            Ok((theta.clone(), vec![(sigma.clone(), theta_n); steps], indices))
        }
        ScanMode::Grisem => {
            let coupling = 1.0 + linalg::op_norm(&srs(sigma.matrix()));
            let target = ExtensionParameter::scalar(coupling, m).shifted(&(-srs(sigma.matrix())))?;
            let schedule = (0..steps)
                .map(|k| (sigma.clone(), ExtensionParameter::scalar(coupling + 2f64.powi(-(k as i32)), m)))
                .collect();
            Ok((target, schedule, indices))
        }
        ScanMode::Shrinking => {
            let mut ens = Ensemble::new(seed);
            let delta = ens.complex_matrix(m, family.dim(), 0.5 * linalg::op_norm(sigma.matrix()).max(1.0));
            let xi = ens.hermitian_matrix(m, 0.5);
            let schedule = (0..steps)
                .map(|k| -> Result<_> {
                    let eps = c(2f64.powi(-(k as i32)), 0.0);
                    let s_n = ChargeMap::new(sigma.matrix() + &delta * eps)?;
                    let t_n = theta.shifted(&(srs(s_n.matrix()) + &xi * eps))?;
                    Ok((s_n, t_n))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((theta.clone(), schedule, indices))
        }
    }
}
