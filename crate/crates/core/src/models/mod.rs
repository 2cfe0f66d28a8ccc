//! Concrete instances: a 1D point interaction with analytic answers and a truncated Nelson model.

pub mod delta1d;
pub mod nelson;

use serde::{Deserialize, Serialize};

pub use delta1d::{delta1d_bound_state, delta1d_build, delta1d_resolvent, delta1d_weyl, BoundState, Delta1DConfig};
pub use nelson::{
    nelson_build, nelson_counterterm, nelson_discrete_counterterm, nelson_experiment, NelsonModel, NelsonReport,
    NelsonTruncConfig,
};

/// Config document; `model` selects the variant, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelConfig {
    Delta1d(Delta1DConfig),
    Nelson(NelsonTruncConfig),
}

impl ModelConfig {
    pub fn validate(&self) -> crate::Result<()> {
        match self {
            ModelConfig::Delta1d(c) => c.validate(),
            ModelConfig::Nelson(c) => c.validate(),
        }
    }
}
