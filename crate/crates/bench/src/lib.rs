//! Shared fixtures for the criterion benches.

use krein_core::checks::{krein_instance, twofold_instance};
use krein_core::krein::{ExtensionParameter, KreinFamily};
use krein_core::models::delta1d::Delta1DConfig;
use krein_core::models::nelson::NelsonTruncConfig;
use krein_core::{TwofoldSystem, C64};

pub const SEED: u64 = 42;

pub fn krein_fixture() -> (KreinFamily, ExtensionParameter) {
    krein_instance(SEED)
}

pub fn twofold_fixture() -> TwofoldSystem {
    twofold_instance(SEED)
}

pub fn z() -> C64 {
    C64::new(0.3, 1.7)
}

pub fn delta_fixture(alpha: f64) -> Delta1DConfig {
    Delta1DConfig { alpha, ..Default::default() }
}

pub fn nelson_fixture() -> NelsonTruncConfig {
    NelsonTruncConfig::minimal()
}
