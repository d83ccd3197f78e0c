//! Run manifests: everything needed to reproduce a run's outputs.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::spec::ScheduleSpec;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub schedule: Option<ScheduleSpec>,
    pub seeds: Vec<u64>,
    /// sha256 of the canonical JSON of command, config, schedule, seeds and params.
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Command-specific inputs such as flags and grids.
    pub params: Value,
    /// Output files, relative to the run directory.
    pub outputs: Vec<String>,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn config_hash(command: &str, config: &ExperimentConfig, schedule: Option<&ScheduleSpec>, seeds: &[u64], params: &Value) -> String {
    let canonical = serde_json::json!({
        "command": command,
        "config": config,
        "schedule": schedule,
        "seeds": seeds,
        "params": params,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, schedule: Option<&ScheduleSpec>, seeds: Vec<u64>, params: Value) -> Self {
        let hash = config_hash(command, config, schedule, &seeds, &params);
        Self {
            run_id: format!("{command}-{}", &hash[..12]),
            command: command.to_string(),
            schedule: schedule.cloned(),
            seeds,
            config_hash: hash,
            config: config.clone(),
            params,
            outputs: Vec::new(),
            started_at: now(),
            finished_at: 0,
        }
    }

    /// True when the stored hash matches the stored inputs.
    pub fn verify(&self) -> bool {
        self.config_hash == config_hash(&self.command, &self.config, self.schedule.as_ref(), &self.seeds, &self.params)
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.finished_at = now();
        let path = dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| HarnessError::schema(path.display().to_string(), e.to_string()))?;
        if !m.verify() {
            return Err(HarnessError::Config(format!(
                "{}: config hash does not match the recorded inputs",
                path.display()
            )));
        }
        Ok(m)
    }
}
