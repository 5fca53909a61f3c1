//! Where each command reads and writes inside the `--out` directory.

use std::path::{Path, PathBuf};

use esad_core::dataset::Partition;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, ErrorCode, Result};

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.tsv")
    }
    pub fn label_counts(&self) -> PathBuf {
        self.root.join("label_counts.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.json")
    }
    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn cache(&self, p: Partition) -> PathBuf {
        self.features_dir().join(format!("{}.esfc", p.name()))
    }
    pub fn features_meta(&self) -> PathBuf {
        self.features_dir().join("meta.json")
    }
    pub fn norm_stats(&self) -> PathBuf {
        self.features_dir().join("norm_stats.json")
    }
    pub fn float_model(&self) -> PathBuf {
        self.root.join("model_float32.esad")
    }
    pub fn int8_model(&self) -> PathBuf {
        self.root.join("model_int8.esad")
    }
    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }
    pub fn train_summary(&self) -> PathBuf {
        self.root.join("train_summary.json")
    }
    pub fn quantize_summary(&self) -> PathBuf {
        self.root.join("quantize_summary.json")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn report(&self, flavor: &str) -> PathBuf {
        self.eval_dir().join(format!("report_{flavor}.json"))
    }
    pub fn roc_csv(&self, flavor: &str) -> PathBuf {
        self.eval_dir().join(format!("roc_{flavor}.csv"))
    }
    pub fn pr_csv(&self, flavor: &str) -> PathBuf {
        self.eval_dir().join(format!("pr_{flavor}.csv"))
    }
    pub fn comparison(&self) -> PathBuf {
        self.eval_dir().join("comparison.md")
    }
    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Reads an upstream artifact, reporting a missing file by path and producer.
pub fn read_artifact(path: &Path, produced_by: &str) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::missing(path, produced_by)),
        Err(e) => Err(CliError::io(path, e)),
    }
}

pub fn read_text_artifact(path: &Path, produced_by: &str) -> Result<String> {
    String::from_utf8(read_artifact(path, produced_by)?)
        .map_err(|_| CliError::new(ErrorCode::BadInput, format!("{} is not UTF-8", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, produced_by: &str) -> Result<T> {
    let text = read_text_artifact(path, produced_by)?;
    serde_json::from_str(&text).map_err(|e| CliError::new(ErrorCode::BadInput, format!("{}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    write_bytes(path, (json + "\n").as_bytes())
}
