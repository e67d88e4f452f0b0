//! Declarative experiments: a TOML config drives corpus generation,
//! pre-training, transfer runs and the English analyses, and every run
//! directory ends with a manifest of hashed inputs and outputs.

mod config;
mod report;
mod run;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{AnalysisConfig, EnglishConfig, ExperimentConfig, LanguageConfig, TransferPlan};
pub use report::{report, Summary};
pub use run::{run_experiment, ANALYSIS_DIR, CHECKPOINT_DIR, CORPUS_DIR};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial { failed_step: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

/// Record of one run: enough to repeat it and to check that the repeat
/// produced the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    /// Input file path to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory to content hash.
    pub outputs: BTreeMap<String, String>,
    pub timings: Vec<StepTiming>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn read(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = run_dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn write(&self, run_dir: impl AsRef<Path>) -> Result<()> {
        let path = run_dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(&path, e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    /// Outputs whose hash differs between the two runs, or that only one has.
    pub fn differing_outputs(&self, other: &RunManifest) -> Vec<String> {
        let mut keys: Vec<&String> = self.outputs.keys().chain(other.outputs.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| self.outputs.get(*k) != other.outputs.get(*k))
            .cloned()
            .collect()
    }
}

/// Runs the configuration recorded in an existing manifest again, into `run_dir`.
pub fn replay(manifest_dir: impl AsRef<Path>, run_dir: impl AsRef<Path>) -> Result<RunManifest> {
    let previous = RunManifest::read(manifest_dir)?;
    run_experiment(&previous.config, run_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
