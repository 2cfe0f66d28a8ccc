//! Seeded identity battery over random Kreĭn and twofold instances.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::krein::{green_identity_check, regular_equivalence, Decomposed, ExtensionParameter, KreinFamily};
use crate::linalg::{self, c, CMat, C64};
use crate::scale::scale_norm;
use crate::twofold::TwofoldSystem;

pub const KREIN_DIM: usize = 8;
pub const KREIN_TARGET: usize = 3;
pub const H_NORM: f64 = 10.0;

/// Random (H, Σ, Θ) with ‖H‖ = 10, ‖Σ‖ = 1, ‖Θ‖ = 1.
pub fn krein_instance(seed: u64) -> (KreinFamily, ExtensionParameter) {
    let mut ens = Ensemble::new(seed);
    let h = ens.hermitian(KREIN_DIM, H_NORM);
    let sigma = ens.charge_map(KREIN_TARGET, KREIN_DIM, 1.0);
    let theta = ExtensionParameter::self_adjoint(ens.hermitian_matrix(KREIN_TARGET, 1.0)).expect("hermitian");
    (KreinFamily::new(h, sigma, None).expect("valid instance"), theta)
}

/// Random semibounded twofold instance with ‖G‖ ≤ 1/2 and symmetric T of measured â < 1,
/// halving T until the relative bound holds.
pub fn twofold_instance(seed: u64) -> TwofoldSystem {
    twofold_instance_with(seed, 2.0)
}

/// Instance used for the A_n = n·i·A·R_{ni} schedule, with ‖A‖ = 1/2.
pub fn hz_instance(seed: u64) -> TwofoldSystem {
    twofold_instance_with(seed, 0.5)
}

pub fn twofold_instance_with(seed: u64, a_norm: f64) -> TwofoldSystem {
    let mut ens = Ensemble::new(seed);
    let h = ens.hermitian(KREIN_DIM, H_NORM);
    let a = ens.charge_map(KREIN_DIM, KREIN_DIM, a_norm);
    let t = ens.hermitian_matrix(KREIN_DIM, 0.5);
    let mut scale = 1.0;
    loop {
        let param = ExtensionParameter::symmetric_only(&t * c(scale, 0.0)).expect("hermitian");
        match TwofoldSystem::semibounded(h.clone(), a.clone(), param, 0.5, 0.5) {
            Ok(s) => return s,
            Err(Error::RelativeBoundTooLarge { .. }) => scale *= 0.5,
            Err(e) => panic!("twofold instance {seed}: {e}"),
        }
    }
}

/// `count` nonreal points with |Re| ≤ 12 and 0.2 ≤ |Im| ≤ 5, both half-planes.
pub fn z_points(seed: u64, count: usize) -> Vec<C64> {
    let mut ens = Ensemble::new(seed ^ 0x5eed_2f01d);
    (0..count)
        .map(|k| {
            let z = ens.nonreal_point(12.0, 0.2, 5.0);
            if k % 2 == 0 { c(z.re, z.im.abs()) } else { c(z.re, -z.im.abs()) }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// adds 1e-6 to one entry of every Kreĭn resolvent fed to the identities
    PerturbResolvent,
}

#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub seed: u64,
    pub instances: usize,
    pub z_per_instance: usize,
    /// replaces every per-identity tolerance when set
    pub tolerance: Option<f64>,
    pub fault: Fault,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { seed: 0, instances: 20, z_per_instance: 5, tolerance: None, fault: Fault::None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
}

type Probe = fn(u64, &[C64], Fault) -> Result<f64>;

fn krein_k(family: &KreinFamily, theta: &ExtensionParameter, z: C64, fault: Fault) -> Result<CMat> {
    let mut k = family.krein_resolvent(theta, z)?;
    if fault == Fault::PerturbResolvent {
        k[(0, 0)] += c(1e-6, 0.0);
    }
    Ok(k)
}

fn pseudo_resolvent(seed: u64, z: &[C64], fault: Fault) -> Result<f64> {
    let (f, theta) = krein_instance(seed);
    let mut worst: f64 = 0.0;
    for w in z.windows(2) {
        let (kz, kw) = (krein_k(&f, &theta, w[0], fault)?, krein_k(&f, &theta, w[1], fault)?);
        worst = worst.max(linalg::op_norm(&(&kz - &kw - &kz * &kw * (w[1] - w[0]))));
    }
    Ok(worst)
}

fn adjoint_symmetry(seed: u64, z: &[C64], fault: Fault) -> Result<f64> {
    let (f, theta) = krein_instance(seed);
    let mut worst: f64 = 0.0;
    for &z in z {
        let d = krein_k(&f, &theta, z, fault)?.adjoint() - krein_k(&f, &theta, z.conj(), fault)?;
        worst = worst.max(linalg::op_norm(&d));
    }
    Ok(worst)
}

fn weyl_qf(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let (f, _) = krein_instance(seed);
    let mut worst: f64 = 0.0;
    for w in z.windows(2) {
        let lhs = f.weyl(w[0])? - f.weyl(w[1])?;
        let rhs = f.gz_bar_adjoint(w[1])? * f.gz(w[0])? * (w[0] - w[1]);
        worst = worst.max(linalg::op_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

fn weyl_rg(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let (f, _) = krein_instance(seed);
    let mut worst: f64 = 0.0;
    for w in z.windows(2) {
        let lhs = f.gz(w[0])? - f.gz(w[1])?;
        let rhs = f.h().resolvent(w[0])? * f.gz(w[1])? * (w[1] - w[0]);
        worst = worst.max(linalg::op_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

fn green(seed: u64, _: &[C64], _: Fault) -> Result<f64> {
    let (f, _) = krein_instance(seed);
    let mut ens = Ensemble::new(seed.wrapping_add(1));
    let sample = |ens: &mut Ensemble| Decomposed::new(ens.column(KREIN_DIM), ens.column(KREIN_TARGET));
    let samples = (0..10).map(|_| Ok((sample(&mut ens)?, sample(&mut ens)?))).collect::<Result<Vec<_>>>()?;
    Ok(green_identity_check(&f, &samples))
}

fn remark_t1(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let (f, theta) = krein_instance(seed);
    let mut worst: f64 = 0.0;
    for &z in z {
        // Θ₀ = Θ + ΣRΣ† is generically invertible
        let theta0 = theta.shifted(&(f.sigma().matrix() * f.r0() * f.sigma().star()))?;
        worst = worst.max(regular_equivalence(f.h(), f.sigma(), &theta0, z, None)?);
    }
    Ok(worst)
}

fn lambda0_independence(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let s = twofold_instance(seed);
    let moved = s.rebuilt_at(s.lambda0() - 1.5)?;
    let mut worst: f64 = 0.0;
    for &z in z {
        worst = worst.max(linalg::op_norm(&(s.twofold_resolvent(z)? - moved.twofold_resolvent(z)?)));
    }
    Ok(worst)
}

fn twofold_equivalence(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let s = twofold_instance(seed);
    let mut worst: f64 = 0.0;
    for &z in z {
        worst = worst.max(linalg::op_norm(&(s.twofold_resolvent(z)? - s.res_t_composition(z)?)));
    }
    Ok(worst)
}

/// ‖(1−G†)(−H+λ₀)(1−G) − (−Ĥ₀+λ₀)‖ with Ĥ₀ read off the T = 0 twofold resolvent.
pub fn factorization_residual(s: &TwofoldSystem, z: C64) -> Result<f64> {
    let s0 = s.with_t(ExtensionParameter::scalar(0.0, s.dim()))?;
    let hat_h0 = linalg::hermitian_part(&s0.reconstructed_hamiltonian(z)?);
    let n = s.dim();
    let l0 = c(s.lambda0(), 0.0);
    let one_minus_g = linalg::identity(n) - s.family().g();
    let lhs = one_minus_g.adjoint() * (linalg::scalar(n, l0) - s.h().matrix()) * one_minus_g;
    Ok(linalg::op_norm(&(lhs - (linalg::scalar(n, l0) - hat_h0))))
}

fn factorization(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let s = twofold_instance(seed);
    let mut worst: f64 = 0.0;
    for &z in z {
        worst = worst.max(factorization_residual(&s, z)?);
    }
    Ok(worst)
}

fn tt(seed: u64, _: &[C64], _: Fault) -> Result<f64> {
    let s = twofold_instance(seed);
    let z = c(s.lambda0(), 0.0);
    Ok(linalg::op_norm(&(s.tt_resolvent()? - s.twofold_resolvent(z)?)))
}

fn lemma_cap(seed: u64, z: &[C64], _: Fault) -> Result<f64> {
    let s = twofold_instance(seed);
    let mut worst: f64 = 0.0;
    for &z in z {
        worst = worst.max(s.lemma_cap_residual(z)?);
    }
    Ok(worst)
}

fn scale_adjoint(seed: u64, _: &[C64], _: Fault) -> Result<f64> {
    let mut ens = Ensemble::new(seed);
    let h = ens.hermitian(KREIN_DIM, H_NORM);
    let a = ens.charge_map(KREIN_DIM, KREIN_DIM, 1.0);
    let n1 = scale_norm(a.matrix(), &h, 0.5, Some(&h), -0.25)?;
    let n2 = scale_norm(&a.star(), &h, 0.25, Some(&h), -0.5)?;
    Ok((n1 - n2).abs() / n1.max(1.0))
}

const BATTERY: [(&str, f64, Probe); 12] = [
    ("pseudo_resolvent", 1e-10, pseudo_resolvent),
    ("adjoint_symmetry", 1e-10, adjoint_symmetry),
    ("weyl_qf", 1e-11, weyl_qf),
    ("weyl_rg", 1e-11, weyl_rg),
    ("green", 1e-10, green),
    ("remark_t1", 1e-10, remark_t1),
    ("scale_adjoint", 1e-12, scale_adjoint),
    ("twofold_equivalence", 1e-9, twofold_equivalence),
    ("factorization_rl", 1e-10, factorization),
    ("tt", 1e-9, tt),
    ("lemma_cap", 1e-10, lemma_cap),
    ("lambda0_independence", 1e-9, lambda0_independence),
];

pub fn battery_names() -> Vec<&'static str> {
    BATTERY.iter().map(|b| b.0).collect()
}

/// Runs every identity over `instances` seeded instances; order of the output is fixed.
pub fn run_battery(cfg: &CheckConfig) -> Vec<CheckOutcome> {
    BATTERY
        .iter()
        .map(|&(name, default_tol, probe)| {
            let tolerance = cfg.tolerance.unwrap_or(default_tol);
            let results: Vec<Result<f64>> = (0..cfg.instances as u64)
                .into_par_iter()
                .map(|k| {
                    let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(k);
                    probe(seed, &z_points(seed, cfg.z_per_instance), cfg.fault)
                })
                .collect();
            let error = results.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
            let residual = results.iter().filter_map(|r| r.as_ref().ok()).fold(0.0, |a: f64, &b| a.max(b));
            CheckOutcome { name, residual, tolerance, passed: error.is_none() && residual <= tolerance, error }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_and_fault_is_caught() {
        let cfg = CheckConfig { instances: 4, ..Default::default() };
        let out = run_battery(&cfg);
        assert_eq!(out.len(), battery_names().len());
        for o in &out {
            assert!(o.passed, "{o:?}");
        }
        let bad = run_battery(&CheckConfig { fault: Fault::PerturbResolvent, ..cfg });
        assert!(bad.iter().any(|o| !o.passed));
        assert!(!bad.iter().find(|o| o.name == "pseudo_resolvent").unwrap().passed);
    }

    #[test]
    fn deterministic() {
        let cfg = CheckConfig { instances: 3, seed: 9, ..Default::default() };
        let a: Vec<f64> = run_battery(&cfg).iter().map(|o| o.residual).collect();
        let b: Vec<f64> = run_battery(&cfg).iter().map(|o| o.residual).collect();
        assert_eq!(a, b);
    }
}
