use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_bytes, Resolved};
use crate::UsageError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInfo {
    pub budget_fraction: f64,
    pub iterations: u32,
    pub goal_distribution: Vec<f64>,
    pub epsilon: f64,
    pub noise_schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_schema: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub strategy: Option<String>,
    pub heuristic: Option<String>,
    pub schedule: Option<ScheduleInfo>,
    /// Artifact name to path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    /// Artifact name to format version.
    pub schemas: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &Resolved) -> Self {
        Self {
            manifest_schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.config_hash(),
            scenario_hash: cfg.scenario_hash(),
            seed: cfg.scenario.seed,
            strategy: None,
            heuristic: None,
            schedule: None,
            artifacts: BTreeMap::new(),
            schemas: BTreeMap::new(),
        }
    }

    pub fn artifact(&mut self, name: &str, file: &str, schema: &str) {
        self.artifacts.insert(name.into(), file.into());
        self.schemas.insert(name.into(), schema.into());
    }

    /// Writes the manifest and returns the hash of its bytes.
    pub fn write(&self, dir: &Path) -> anyhow::Result<String> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(dir.join(MANIFEST_FILE), &bytes)?;
        Ok(sha256_bytes(&bytes))
    }

    pub fn read(dir: &Path) -> anyhow::Result<(Self, String)> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Self = serde_json::from_slice(&bytes)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))
            .with_context(|| format!("reading {}", path.display()))?;
        Ok((manifest, sha256_bytes(&bytes)))
    }
}
