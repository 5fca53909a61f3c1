use std::path::Path;
use std::time::Instant;

use esad_core::audio::decode_wav;
use esad_core::dataset::BinaryLabel;
use esad_core::mfcc::{clip_to_features, MfccExtractor};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;
use crate::quantize::load_model_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: BinaryLabel,
    pub probability: f64,
    /// Decode through prediction, excluding file I/O.
    pub latency_ms: f64,
    pub model: String,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} probability={:.6} latency_ms={:.3} model={}", self.label, self.probability, self.latency_ms, self.model)
    }
}

/// Classifies one WAV using only the model file's embedded config and statistics.
pub fn classify(model_path: &Path, wav: &Path, threshold: f64) -> Result<Verdict> {
    let model = load_model_file(model_path, "quantize")?;
    let bytes = std::fs::read(wav).map_err(|e| CliError::new(ErrorCode::BadInput, format!("{}: {e}", wav.display())))?;
    let started = Instant::now();
    let clip = decode_wav(&bytes).with_code(ErrorCode::BadInput, &wav.display().to_string())?;
    let extractor = MfccExtractor::new(*model.mfcc()).code(ErrorCode::ModelFile)?;
    let fm = clip_to_features(&extractor, &clip).with_code(ErrorCode::BadInput, &wav.display().to_string())?;
    let x = model.norm_stats().apply(&fm.values).code(ErrorCode::ModelFile)?;
    let probability = model.predict(&x).code(ErrorCode::BadInput)?;
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    let label = if probability >= threshold { BinaryLabel::Anomalous } else { BinaryLabel::Normal };
    Ok(Verdict { label, probability, latency_ms, model: model.flavor_name().to_string() })
}

pub fn run(cfg: &PipelineConfig, layout: &Layout, wav: &Path, model: Option<&Path>) -> Result<Verdict> {
    let mut rec = RunRecorder::start("infer", cfg);
    let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| layout.int8_model());
    let verdict = classify(&model_path, wav, cfg.evaluate.threshold)?;
    println!("{verdict}");
    rec.input(&model_path);
    rec.input(wav);
    layout::create_dir(&layout.root)?;
    rec.finish(&layout.root)?;
    Ok(verdict)
}
