use std::path::Path;

use esad_core::dataset::Partition;
use esad_core::model_store::{load, save, StoredModel};
use esad_core::nn::DenseModel;
use esad_core::quant::{calibrate, quantize_weights};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::extract::{check_fingerprint, load_cache, load_meta};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScales {
    pub input_scale: f32,
    pub input_zero_point: i32,
    pub weight_scale: f32,
    pub output_scale: f32,
    pub output_zero_point: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeSummary {
    pub file_bytes: usize,
    pub calibration_clips: usize,
    pub calibration: String,
    pub layers: Vec<LayerScales>,
}

pub fn load_model_file(path: &Path, produced_by: &str) -> Result<StoredModel> {
    let bytes = layout::read_artifact(path, produced_by)?;
    load(&bytes).with_code(ErrorCode::ModelFile, &path.display().to_string())
}

pub fn load_float(path: &Path) -> Result<DenseModel> {
    match load_model_file(path, "train")? {
        StoredModel::Float(m) => Ok(m),
        StoredModel::Int8(_) => Err(CliError::new(ErrorCode::ModelFile, format!("{} is an int8 model, expected float32", path.display()))),
    }
}

pub fn run(cfg: &PipelineConfig, layout: &Layout) -> Result<QuantizeSummary> {
    let mut rec = RunRecorder::start("quantize", cfg);
    let model = load_float(&layout.float_model())?;
    let meta = load_meta(layout)?;
    check_fingerprint(&meta, &model.mfcc, &layout.float_model())?;
    let train = load_cache(layout, &meta, Partition::Train)?;
    for p in [layout.float_model(), layout.features_meta(), layout.cache(Partition::Train)] {
        rec.input(&p);
    }

    let n = cfg.quantize.calibration_size.min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = sample(&mut rng, train.len(), n).into_vec();
    picks.sort_unstable();
    let rep: Vec<Vec<f32>> = picks
        .iter()
        .map(|&i| model.norm_stats.apply(&train[i].values))
        .collect::<std::result::Result<_, _>>()
        .code(ErrorCode::BadInput)?;

    let mode = cfg.quantize.calibration();
    let qparams = calibrate(&model, &rep, mode).code(ErrorCode::Quantize)?;
    let qm = quantize_weights(&model, &qparams).code(ErrorCode::Quantize)?;
    let layers = qm
        .layers
        .iter()
        .map(|l| LayerScales {
            input_scale: l.input.scale,
            input_zero_point: l.input.zero_point,
            weight_scale: l.weight.scale,
            output_scale: l.output.scale,
            output_zero_point: l.output.zero_point,
        })
        .collect();
    let mut bytes = Vec::new();
    save(&StoredModel::Int8(qm), &mut bytes).code(ErrorCode::ModelFile)?;
    layout::write_bytes(&layout.int8_model(), &bytes)?;

    let summary = QuantizeSummary { file_bytes: bytes.len(), calibration_clips: n, calibration: format!("{mode:?}"), layers };
    layout::write_json(&layout.quantize_summary(), &summary)?;
    log::info!("int8 model: {} bytes, calibrated on {n} clips", bytes.len());
    rec.output(&layout.int8_model());
    rec.output(&layout.quantize_summary());
    rec.finish(&layout.root)?;
    Ok(summary)
}
