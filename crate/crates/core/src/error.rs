use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("z = {z} lies within {gap:e} of the spectrum")]
    SpectrumHit { z: Complex64, gap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigenbasis is not unitary (residual {residual:e})")]
    NotUnitary { residual: f64 },

    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    /// Θ + M_z is numerically singular, so z is outside the resolvent set of H_Θ.
    #[error("z = {z} is not in the admissible set (cond {cond:e})")]
    NotInZ { z: Complex64, cond: f64 },

    #[error("Konno-Kuroda pivot singular at z = {z} (cond {cond:e})")]
    SingularPivot { z: Complex64, cond: f64 },

    #[error("charge extraction ill-conditioned (cond {cond:e})")]
    DecompositionIllConditioned { cond: f64 },

    #[error("block system singular at z = {z} (cond {cond:e})")]
    BlockSingular { z: Complex64, cond: f64 },

    #[error("|G| = {norm} >= 1 at lambda0 = {lambda0}; lower lambda0")]
    GNotContractive { norm: f64, lambda0: f64 },

    #[error("1 - T R0(z) singular at z = {z} (cond {cond:e})")]
    NeumannSingular { z: Complex64, cond: f64 },

    #[error("gamma ladder exhausted after {doublings} doublings")]
    LadderExhausted { doublings: usize },

    #[error("relative bound {bound} of T is not below 1")]
    RelativeBoundTooLarge { bound: f64 },

    #[error("Theta_n singular at schedule index {index}")]
    ThetaSingular { index: usize },

    #[error("no bound state below zero")]
    NoBoundState,

    #[error("Fock dimension {dim} exceeds budget {budget}")]
    BudgetExceeded { dim: usize, budget: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
