use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written as `run_<command>.json` next to a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    pub duration_s: f64,
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("run_{command}.json"))
}

/// Collects inputs and outputs while a command runs.
pub struct RunRecorder {
    command: String,
    config: PipelineConfig,
    started: Instant,
    started_unix_s: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl RunRecorder {
    pub fn start(command: &str, config: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            started: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self, out: &Path) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: TOOL_VERSION.to_string(),
            seed: self.config.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_s: self.started_unix_s,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let path = manifest_path(out, &manifest.command);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
