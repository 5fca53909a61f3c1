//! The `esad` pipeline: prepare, extract, train, quantize, evaluate, infer
//! and plot, each writing its artifacts and a run manifest under `--out`.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod extract;
pub mod infer;
pub mod layout;
pub mod manifest;
pub mod plot;
pub mod prepare;
pub mod quantize;
pub mod svg;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{PipelineConfig, Population};
use crate::error::{CliError, ErrorCode, Result};
use crate::layout::Layout;

pub const DATA_ENV: &str = "ESAD_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "esad", version, about = "MFCC + dense network acoustic anomaly detection with int8 deployment")]
pub struct Cli {
    /// Seed for the split, initialization, shuffling, dropout and calibration sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "esad-out")]
    pub out: PathBuf,
    /// Records covered by `evaluate`.
    #[arg(long, global = true, value_enum)]
    pub population: Option<Population>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse metadata, map labels and write the stratified split manifest.
    Prepare {
        /// Dataset root holding `metadata/UrbanSound8K.csv` and `audio/fold*/`.
        #[arg(long, env = DATA_ENV)]
        data: PathBuf,
        /// Label mapping file (`class_name = normal | anomalous | excluded`).
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Decode every clip, compute MFCCs and write per-partition feature caches.
    Extract {
        /// Dataset root; defaults to the one recorded by `prepare`.
        #[arg(long, env = DATA_ENV)]
        data: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Train the float model on the cached features.
    Train {
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Calibrate and convert the float model to int8.
    Quantize {
        #[arg(long)]
        calibration_size: Option<usize>,
        /// Percentile clipping for activation ranges instead of min/max.
        #[arg(long)]
        percentile: Option<f64>,
    },
    /// Score the float and int8 models with the same metrics.
    Evaluate {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Classify one WAV file.
    Infer {
        wav: PathBuf,
        /// Model file; defaults to the int8 model under `--out`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Render training curves and evaluation charts as SVG.
    Plot {
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        report: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare { .. } => "prepare",
            Command::Extract { .. } => "extract",
            Command::Train { .. } => "train",
            Command::Quantize { .. } => "quantize",
            Command::Evaluate { .. } => "evaluate",
            Command::Infer { .. } => "infer",
            Command::Plot { .. } => "plot",
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.population {
        cfg.population = p;
    }
    match &cli.command {
        Command::Prepare { mapping: Some(m), .. } => cfg.mapping = Some(m.clone()),
        Command::Extract { threads: Some(t), .. } => cfg.extract.threads = *t,
        Command::Train { max_epochs: Some(n) } => cfg.train.max_epochs = *n,
        Command::Quantize { calibration_size, percentile } => {
            if let Some(n) = calibration_size {
                cfg.quantize.calibration_size = *n;
            }
            if percentile.is_some() {
                cfg.quantize.percentile = *percentile;
            }
        }
        Command::Evaluate { threshold: Some(t) } => cfg.evaluate.threshold = *t,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let layout = Layout::new(&cli.out);
    match &cli.command {
        Command::Prepare { data, .. } => prepare::run(&cfg, &layout, data).map(drop),
        Command::Extract { data, .. } => extract::run(&cfg, &layout, data.as_deref()).map(drop),
        Command::Train { .. } => train::run(&cfg, &layout).map(drop),
        Command::Quantize { .. } => quantize::run(&cfg, &layout).map(drop),
        Command::Evaluate { .. } => evaluate::run(&cfg, &layout).map(drop),
        Command::Infer { wav, model } => infer::run(&cfg, &layout, wav, model.as_deref()).map(drop),
        Command::Plot { history, report } => plot::run(&cfg, &layout, history.as_deref(), report).map(drop),
    }
}

/// Maps a clap failure onto the one-line error convention.
pub fn usage_error(err: &clap::Error) -> CliError {
    let text = err.to_string();
    let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
    CliError::new(ErrorCode::Usage, first.to_string())
}
