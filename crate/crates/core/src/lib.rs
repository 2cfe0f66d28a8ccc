//! Finite-dimensional Kreĭn resolvent machinery: singular perturbations, the twofold
//! construction of `H + A* + A`, cutoff renormalization, and two model instances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod ensemble;
pub mod error;
pub mod krein;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod renorm;
pub mod scale;
pub mod twofold;

pub use error::{Error, Result};
pub use krein::{
    additive_form_check, green_identity_check, konno_kuroda, regular_equivalence, AdditiveFormReport,
    BoundaryMaps, Decomposed, ExtensionParameter, KreinFamily, ParameterKind, WeylPair,
};
pub use linalg::{CMat, CVec, C64};
pub use renorm::{
    approx_hamiltonians, hz_family, hz_indices, remark_hz_smoother, scan_schedule, theorem_bb_driver, theorem_conv_driver,
    ConvergenceReport, ConvergenceRow, CutoffFamily, ScanMode,
};
pub use scale::{first_resolvent_check, scale_norm, ChargeMap, ScaleWeight, SpectralOperator};
pub use twofold::{contractive_lambda0, BlockOperator, BlockSolve, GammaCertificate, HatG, LadderRung, TwofoldSystem};
