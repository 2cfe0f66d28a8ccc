//! Point interaction on a periodic box: Fourier-truncated −d²/dx² with Σ = evaluation at 0.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krein::{konno_kuroda, ExtensionParameter};
use crate::linalg::{self, c, CMat, C64};
use crate::scale::{ChargeMap, SpectralOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delta1DConfig {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "P")]
    pub p: usize,
    pub alpha: f64,
}

impl Default for Delta1DConfig {
    fn default() -> Self {
        Self { l: 40.0, p: 1024, alpha: 2.0 }
    }
}

impl Delta1DConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l >= 10.0) {
            return Err(Error::InvalidInput(format!("L: must be >= 10, got {}", self.l)));
        }
        if self.p < 64 || !self.p.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("P: must be even and >= 64, got {}", self.p)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidInput("alpha: must be finite".into()));
        }
        Ok(())
    }

    /// Wave numbers 2πk/L for k = −P/2..P/2−1.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let half = (self.p / 2) as i64;
        (-half..half).map(|k| 2.0 * PI * k as f64 / self.l).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.wavenumbers().iter().map(|k| k * k).collect()
    }
}

/// (H, Σ) in the plane-wave basis; no size validation so tiny instances stay available.
pub fn delta1d_build(cfg: &Delta1DConfig) -> Result<(SpectralOperator, ChargeMap)> {
    if cfg.p == 0 || !cfg.p.is_multiple_of(2) || !(cfg.l > 0.0) {
        return Err(Error::InvalidInput("delta1d needs even P > 0 and L > 0".into()));
    }
    let h = SpectralOperator::diagonal(&cfg.eigenvalues())?;
    let row = CMat::from_element(1, cfg.p, c(cfg.l.powf(-0.5), 0.0));
    Ok((h, ChargeMap::new(row)?))
}

/// ΣR_zΣ† as a plain sum, O(P).
pub fn delta1d_weyl(cfg: &Delta1DConfig, z: C64) -> C64 {
    cfg.eigenvalues().iter().map(|&l| 1.0 / (z - l)).sum::<C64>() / cfg.l
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundState {
    pub energy: f64,
    pub exact: f64,
    pub relative_error: f64,
    /// cond of the Kreĭn pivot Θ₀ − ΣR_EΣ† at the located energy
    pub pivot_cond: f64,
}

/// Negative pole of the resolvent of H − αΣ†Σ, by bisection on the secular equation Θ₀ = ΣR_EΣ†.
pub fn delta1d_bound_state(cfg: &Delta1DConfig) -> Result<BoundState> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::NoBoundState);
    }
    let theta0 = -1.0 / cfg.alpha;
    let secular = |e: f64| theta0 - delta1d_weyl(cfg, c(e, 0.0)).re;
    // ΣR_EΣ† is decreasing on (−∞, 0) from 0⁻ to −∞, so the root is bracketed
    let mut lo = -1.0;
    while secular(lo) >= 0.0 {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::NoBoundState);
        }
    }
    let mut hi = lo / 2.0;
    while secular(hi) < 0.0 {
        hi /= 2.0;
        if hi > -1e-300 {
            return Err(Error::NoBoundState);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let energy = 0.5 * (lo + hi);
    let exact = -cfg.alpha * cfg.alpha / 4.0;
    let pivot = theta0 - delta1d_weyl(cfg, c(energy, 0.0)).re;
    Ok(BoundState {
        energy,
        exact,
        relative_error: ((energy - exact) / exact).abs(),
        pivot_cond: theta0.abs() / pivot.abs().max(f64::MIN_POSITIVE),
    })
}

/// Resolvent of H − αΣ†Σ through the Konno–Kuroda formula with Θ₀ = −1/α.
pub fn delta1d_resolvent(cfg: &Delta1DConfig, z: C64) -> Result<CMat> {
    let (h, sigma) = delta1d_build(cfg)?;
    konno_kuroda(&h, &sigma, &ExtensionParameter::scalar(-1.0 / cfg.alpha, 1), z)
}

/// Smallest eigenvalue of the assembled dense matrix; O(P³), cross-check only.
pub fn delta1d_dense_ground_state(cfg: &Delta1DConfig) -> Result<f64> {
    let (h, sigma) = delta1d_build(cfg)?;
    let s = sigma.matrix();
    let dense = h.matrix() - s.adjoint() * s * c(cfg.alpha, 0.0);
    Ok(linalg::min_eigenvalue(&dense))
}

/// max over the grid of Im(ΣR_zΣ†)·sign(Im z); negative means −ΣR_zΣ† is Herglotz on the grid.
pub fn herglotz_violation(cfg: &Delta1DConfig, grid: &[C64]) -> f64 {
    grid.iter()
        .map(|&z| delta1d_weyl(cfg, z).im * z.im.signum())
        .fold(f64::NEG_INFINITY, f64::max)
}
