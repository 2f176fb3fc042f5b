//! Run configuration: one JSON file per run.

use std::path::PathBuf;

use rase_core::correlators::ScanSpec;
use rase_core::integrator::{MbGrid, PulseProfile, ResidualSpec};
use rase_core::model::{GridSpec, PhysicalParams, PulseEvent};
use rase_core::paraxial::KIndex;
use rase_core::tolerances::Tolerances;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXPERIMENTS: [&str; 9] = [
    "absorb",
    "echo",
    "ase",
    "rase",
    "cs-scan",
    "area",
    "imperfect-pi",
    "phasematch",
    "oracle-check",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub params: PhysicalParams,
    /// Grid of the linear engine (absorb, echo, ase, oracle-check).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Pulse events on the engine grid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sequence: Vec<PulseEvent>,
    /// Mirror-bin setup (rase, cs-scan, phasematch).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    /// Optical depths of a cs-scan; `params.alpha` is overridden per point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_ls: Vec<f64>,
    /// Nonlinear integrator run (area, and optionally absorb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imperfect_pi: Option<ImperfectPiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse: Option<TransverseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Reserved; every run is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub grid: MbGrid,
    pub pulses: Vec<PulseProfile>,
    /// Start with inverted atoms instead of ground-state atoms.
    #[serde(default)]
    pub excited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImperfectPiConfig {
    pub eps: f64,
    pub spec: ResidualSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseConfig {
    /// Half width of the square lattice around `k_pi`.
    pub half_width: i64,
    pub k_unit: f64,
    pub k_pi: KIndex,
}

/// Why a configuration was rejected.
#[derive(Debug)]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        ConfigError { code, message: message.into() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new("invalid-json", e.to_string()))?;
        if let Some(name) = value.get("experiment").and_then(|v| v.as_str()) {
            if !EXPERIMENTS.contains(&name) {
                return Err(ConfigError::new(
                    "unknown-experiment",
                    format!("unknown experiment {name:?}; expected one of {}", EXPERIMENTS.join(", ")),
                ));
            }
        }
        serde_json::from_value(value).map_err(|e| ConfigError::new("invalid-config", e.to_string()))
    }

    /// Canonical serialization used for hashing and the metadata file.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
        section.as_ref().ok_or_else(|| {
            ConfigError::new("missing-section", format!("experiment {} needs a {name:?} section", self.experiment))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let text = r#"{"experiment":"echo","params":{"alpha":1.0,"length":1.0},
            "grid":{"t_start":0.0,"window":16.0,"dt":1.0,"half_span":21.99,"n_delta":64,"n_z":4},
            "sequence":[{"time":0.0,"kind":"weak-input","profile":{"shape":"square","amplitude":1.0,"duration":1.0}},
                        {"time":8.0,"kind":"pi"}]}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&c.canonical_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_experiment() {
        let e = ExperimentConfig::parse(r#"{"experiment":"laser","params":{"alpha":1.0,"length":1.0}}"#).unwrap_err();
        assert_eq!(e.code, "unknown-experiment");
    }
}
