//! Pipeline configuration. Precedence: built-in defaults, then the TOML file
//! given by `--config`, then command-line flags.

use std::path::{Path, PathBuf};

use esad_core::dataset::SplitSpec;
use esad_core::mfcc::MfccConfig;
use esad_core::nn::TrainConfig;
use esad_core::quant::Calibration;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ErrorCode, Result};

/// Which records the evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    /// The held-out test partition only.
    Test,
    /// Every included record (train, validation and test).
    All,
}

impl Population {
    pub fn name(self) -> &'static str {
        match self {
            Population::Test => "test",
            Population::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub validation_fraction_of_train: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitSpec::default();
        Self { train_fraction: d.train_fraction, validation_fraction_of_train: d.validation_fraction_of_train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Abort when more than this fraction of clips cannot be decoded.
    pub max_unreadable_fraction: f64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { max_unreadable_fraction: 0.05, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeConfig {
    /// Training clips drawn (seeded) for calibration.
    pub calibration_size: usize,
    /// Percentile clipping instead of min/max when set, e.g. 99.99.
    pub percentile: Option<f64>,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        Self { calibration_size: 500, percentile: None }
    }
}

impl QuantizeConfig {
    pub fn calibration(&self) -> Calibration {
        match self.percentile {
            Some(p) => Calibration::Percentile(p),
            None => Calibration::MinMax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { threshold: esad_core::metrics::DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub population: Population,
    /// Label mapping file; the built-in default mapping when absent.
    pub mapping: Option<PathBuf>,
    pub split: SplitConfig,
    pub extract: ExtractConfig,
    pub mfcc: MfccConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub quantize: QuantizeConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            population: Population::Test,
            mapping: None,
            split: SplitConfig::default(),
            extract: ExtractConfig::default(),
            mfcc: MfccConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            quantize: QuantizeConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::new(ErrorCode::Config, e.to_string()))
    }

    /// Defaults overlaid with the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ErrorCode::Config, format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::new(ErrorCode::Config, format!("{}: {}", path.display(), e.message)))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            validation_fraction_of_train: self.split.validation_fraction_of_train,
            seed: self.seed,
        }
    }

    /// The trainer settings with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::new(ErrorCode::Config, m));
        self.split_spec().validate().map_err(|e| CliError::new(ErrorCode::Config, e.to_string()))?;
        self.mfcc.validate().map_err(|e| CliError::new(ErrorCode::Config, e.to_string()))?;
        self.train_config().validate().map_err(|e| CliError::new(ErrorCode::Config, e.to_string()))?;
        if !(0.0..=1.0).contains(&self.extract.max_unreadable_fraction) {
            return bad(format!("extract.max_unreadable_fraction = {} is not in [0, 1]", self.extract.max_unreadable_fraction));
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            return bad("model.hidden sizes must be positive".into());
        }
        if self.quantize.calibration_size == 0 {
            return bad("quantize.calibration_size must be positive".into());
        }
        if let Some(p) = self.quantize.percentile {
            if !(50.0..=100.0).contains(&p) {
                return bad(format!("quantize.percentile = {p} is not in [50, 100]"));
            }
        }
        if !(0.0..=1.0).contains(&self.evaluate.threshold) {
            return bad(format!("evaluate.threshold = {} is not in [0, 1]", self.evaluate.threshold));
        }
        Ok(())
    }
}
