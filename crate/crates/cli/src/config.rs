use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use krein_core::renorm::ScanMode;

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    /// exit 1: a check failed or a computation errored
    Run(String),
    /// exit 2: unreadable or invalid configuration
    Config(String),
    /// exit 3: Fock dimension above the budget
    Budget(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Run(_) => 1,
            Failure::Config(_) => 2,
            Failure::Budget(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Run(m) | Failure::Config(m) | Failure::Budget(m) => m,
        }
    }
}

impl From<krein_core::Error> for Failure {
    fn from(e: krein_core::Error) -> Self {
        match e {
            krein_core::Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            krein_core::Error::InvalidInput(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        }
    }
}

/// Reads a JSON object; `model`, when present, must equal `expected`.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, expected: Option<&str>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: malformed JSON: {e}", path.display())))?;
    let Some(object) = value.as_object_mut() else {
        return Err(Failure::Config(format!("{}: top level must be an object", path.display())));
    };
    if let Some(model) = object.remove("model") {
        match expected {
            Some(want) if model.as_str() == Some(want) => {}
            Some(want) => return Err(Failure::Config(format!("model: expected \"{want}\", got {model}"))),
            None => return Err(Failure::Config("model: unknown field for this command".into())),
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        if key == "." {
            Failure::Config(format!("{}: {inner}", path.display()))
        } else {
            Failure::Config(format!("{key}: {inner}"))
        }
    })
}

fn default_instances() -> usize {
    20
}
fn default_z_per_instance() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckFile {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_z_per_instance")]
    pub z_per_instance: usize,
}

impl Default for CheckFile {
    fn default() -> Self {
        Self { instances: default_instances(), z_per_instance: default_z_per_instance() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Exact,
    Grisem,
    Shrinking,
    /// cutoff A_n = n·i·A·R_{ni} on a twofold instance
    Hz,
}

impl ScanKind {
    pub fn mode(self) -> Option<ScanMode> {
        match self {
            ScanKind::Exact => Some(ScanMode::Exact),
            ScanKind::Grisem => Some(ScanMode::Grisem),
            ScanKind::Shrinking => Some(ScanMode::Shrinking),
            ScanKind::Hz => None,
        }
    }
}

fn default_steps() -> usize {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanFile {
    pub mode: ScanKind,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// evaluation points as [re, im]
    #[serde(default)]
    pub z: Option<Vec<[f64; 2]>>,
}

impl Default for ScanFile {
    fn default() -> Self {
        Self { mode: ScanKind::Exact, steps: default_steps(), z: None }
    }
}
