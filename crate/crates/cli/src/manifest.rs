//! `manifest.json`: what each stage produced, from which inputs, and when.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest of everything the stage's outputs depend on.
    pub key: String,
    pub wall_clock_secs: f64,
    pub world_fingerprint: Option<String>,
    pub model_hash: Option<String>,
    /// Output paths relative to the output root, mapped to their SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub stage: String,
    /// `ran` or `skipped`.
    pub action: String,
    pub unix_time: u64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: Option<ExperimentConfig>,
    pub stages: BTreeMap<String, StageRecord>,
    pub history: Vec<HistoryEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
            stages: BTreeMap::new(),
            history: Vec::new(),
        }
    }
}

/// Why a stage's recorded outputs cannot be reused.
#[derive(Clone, Debug, PartialEq)]
pub enum Staleness {
    Missing,
    DifferentInputs,
    ChangedOutputs(String),
}

impl Manifest {
    /// Loads the manifest under `root`, or an empty one if there is none yet.
    pub fn load(root: &Path) -> Result<Self, CliError> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::artifact(MANIFEST_FILE, e.to_string()))
    }

    pub fn save(&self, root: &Path) -> Result<(), CliError> {
        fs::create_dir_all(root)?;
        let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(tmp, root.join(MANIFEST_FILE))?;
        Ok(())
    }

    /// Checks that `stage` was produced from `key` and its outputs are intact.
    pub fn check(&self, root: &Path, stage: &str, key: &str) -> Result<&StageRecord, Staleness> {
        let record = self.stages.get(stage).ok_or(Staleness::Missing)?;
        if record.key != key {
            return Err(Staleness::DifferentInputs);
        }
        for (rel, hash) in &record.outputs {
            match sha256_file(&root.join(rel)) {
                Ok(found) if &found == hash => {}
                _ => return Err(Staleness::ChangedOutputs(rel.clone())),
            }
        }
        Ok(record)
    }

    pub fn log(&mut self, stage: &str, action: &str, wall_clock_secs: f64) {
        let unix_time = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.history.push(HistoryEntry {
            stage: stage.to_string(),
            action: action.to_string(),
            unix_time,
            wall_clock_secs,
        });
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Hex SHA-256 over a sequence of labelled parts.
pub fn digest_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
