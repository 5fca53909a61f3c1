use esad_core::dataset::{ManifestEntry, Partition};
use esad_core::feature_cache::CacheEntry;
use esad_core::mfcc::NormStats;
use esad_core::model_store::{save, StoredModel};
use esad_core::nn::{init_model, train, LabeledSet};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::extract::{load_cache, load_meta, load_split};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub layer_sizes: Vec<usize>,
    pub param_count: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub train_clips: usize,
    pub validation_clips: usize,
}

/// Normalizes cached vectors and attaches their manifest labels.
pub fn labeled_set(entries: &[CacheEntry], split: &[ManifestEntry], stats: &NormStats) -> Result<LabeledSet> {
    let mut set = LabeledSet::default();
    for e in entries {
        let m = split.get(e.id as usize).ok_or_else(|| {
            CliError::new(ErrorCode::BadInput, format!("feature cache id {} is not in the split manifest", e.id))
        })?;
        set.features.push(stats.apply(&e.values).code(ErrorCode::BadInput)?);
        set.labels.push(m.label);
    }
    Ok(set)
}

pub fn run(cfg: &PipelineConfig, layout: &Layout) -> Result<TrainSummary> {
    let mut rec = RunRecorder::start("train", cfg);
    let split = load_split(layout)?;
    let meta = load_meta(layout)?;
    let stats: NormStats = layout::read_json(&layout.norm_stats(), "extract")?;
    let train_set = labeled_set(&load_cache(layout, &meta, Partition::Train)?, &split, &stats)?;
    let val_set = labeled_set(&load_cache(layout, &meta, Partition::Validation)?, &split, &stats)?;
    for p in [layout.split(), layout.features_meta(), layout.norm_stats(), layout.cache(Partition::Train), layout.cache(Partition::Validation)] {
        rec.input(&p);
    }

    let mut sizes = vec![meta.dim];
    sizes.extend(&cfg.model.hidden);
    sizes.push(1);
    let tc = cfg.train_config();
    let model = init_model(&sizes, tc.seed, stats, meta.mfcc).code(ErrorCode::Train)?;
    log::info!("training {:?} ({} parameters) on {} clips", sizes, model.param_count(), train_set.len());
    let (model, history) = train(model, &train_set, &val_set, &tc).code(ErrorCode::Train)?;

    let mut bytes = Vec::new();
    save(&StoredModel::Float(model.clone()), &mut bytes).code(ErrorCode::ModelFile)?;
    layout::write_bytes(&layout.float_model(), &bytes)?;
    layout::write_bytes(&layout.history(), history.to_csv().as_bytes())?;
    let summary = TrainSummary {
        layer_sizes: sizes,
        param_count: model.param_count(),
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
        stopped_early: history.stopped_early,
        train_clips: train_set.len(),
        validation_clips: val_set.len(),
    };
    layout::write_json(&layout.train_summary(), &summary)?;
    for p in [layout.float_model(), layout.history(), layout.train_summary()] {
        rec.output(&p);
    }
    rec.finish(&layout.root)?;
    Ok(summary)
}
