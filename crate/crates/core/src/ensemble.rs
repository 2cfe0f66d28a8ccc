//! Seeded Gaussian ensembles for reproducible random instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{self, c, CMat, CVec, C64};
use crate::scale::{ChargeMap, SpectralOperator};

pub struct Ensemble {
    rng: ChaCha8Rng,
}

impl Ensemble {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Uniform::new(lo, hi).expect("empty range").sample(&mut self.rng)
    }

    pub fn complex_normal(&mut self) -> C64 {
        c(self.normal(), self.normal()) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Gaussian matrix rescaled to spectral norm `norm`.
    pub fn complex_matrix(&mut self, rows: usize, cols: usize, norm: f64) -> CMat {
        let m = CMat::from_fn(rows, cols, |_, _| self.complex_normal());
        let n = linalg::op_norm(&m);
        m * c(norm / n, 0.0)
    }

    /// GUE-type Hermitian matrix rescaled to spectral norm `norm`.
    pub fn hermitian_matrix(&mut self, n: usize, norm: f64) -> CMat {
        let x = CMat::from_fn(n, n, |_, _| self.complex_normal());
        let h = linalg::hermitian_part(&x);
        let s = linalg::op_norm(&h);
        h * c(norm / s, 0.0)
    }

    pub fn hermitian(&mut self, n: usize, norm: f64) -> SpectralOperator {
        let h = self.hermitian_matrix(n, norm);
        SpectralOperator::from_hermitian(&h).expect("GUE sample is Hermitian")
    }

    pub fn charge_map(&mut self, target: usize, dim: usize, norm: f64) -> ChargeMap {
        ChargeMap::new(self.complex_matrix(target, dim, norm)).expect("finite sample")
    }

    pub fn unit_vector(&mut self, n: usize) -> CVec {
        let v = CVec::from_fn(n, |_, _| self.complex_normal());
        let nv = v.norm();
        v / c(nv, 0.0)
    }

    pub fn vector(&mut self, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| self.complex_normal())
    }

    /// Gaussian n×1 matrix.
    pub fn column(&mut self, n: usize) -> CMat {
        CMat::from_fn(n, 1, |_, _| self.complex_normal())
    }

    pub fn unit_column(&mut self, n: usize) -> CMat {
        let v = self.column(n);
        let nv = v.norm();
        v / c(nv, 0.0)
    }

    /// Point with |Re| ≤ `re`, `im_lo` ≤ |Im| ≤ `im_hi` and random half-plane.
    pub fn nonreal_point(&mut self, re: f64, im_lo: f64, im_hi: f64) -> C64 {
        let x = self.uniform(-re, re);
        let y = self.uniform(im_lo, im_hi);
        if self.uniform(0.0, 1.0) < 0.5 {
            c(x, y)
        } else {
            c(x, -y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_streams_repeat() {
        let a = Ensemble::new(9).complex_matrix(3, 4, 2.0);
        let b = Ensemble::new(9).complex_matrix(3, 4, 2.0);
        assert_eq!(a, b);
        assert!((linalg::op_norm(&a) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hermitian_norm_pinned() {
        let h = Ensemble::new(1).hermitian(8, 10.0);
        assert!((h.norm() - 10.0).abs() < 1e-12);
    }
}
