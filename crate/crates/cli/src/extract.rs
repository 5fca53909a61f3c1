use std::collections::BTreeMap;
use std::path::Path;

use esad_core::audio::decode_wav;
use esad_core::dataset::{parse_manifest, ManifestEntry, Partition};
use esad_core::feature_cache::{self, CacheEntry};
use esad_core::mfcc::{clip_to_features, fit_norm_stats, MfccConfig, MfccExtractor, NormStats};
use esad_core::model_store::mfcc_fingerprint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;
use crate::prepare::{audio_root, DatasetInfo};

/// `features/meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub mfcc_fingerprint: u32,
    pub mfcc: MfccConfig,
    pub dim: usize,
    pub clips: BTreeMap<String, usize>,
    pub unreadable: Vec<String>,
}

pub fn load_split(layout: &Layout) -> Result<Vec<ManifestEntry>> {
    let path = layout.split();
    let text = layout::read_text_artifact(&path, "prepare")?;
    parse_manifest(&text).with_code(ErrorCode::BadInput, &path.display().to_string())
}

pub fn load_meta(layout: &Layout) -> Result<FeatureMeta> {
    layout::read_json(&layout.features_meta(), "extract")
}

/// Raw (unnormalized) feature vectors of one partition; ids index the split manifest.
pub fn load_cache(layout: &Layout, meta: &FeatureMeta, p: Partition) -> Result<Vec<CacheEntry>> {
    let path = layout.cache(p);
    let bytes = layout::read_artifact(&path, "extract")?;
    feature_cache::decode(&bytes, meta.dim).with_code(ErrorCode::BadInput, &path.display().to_string())
}

/// Refuses to combine features and a model built with different front ends.
pub fn check_fingerprint(meta: &FeatureMeta, model_cfg: &MfccConfig, model_path: &Path) -> Result<()> {
    let fp = mfcc_fingerprint(model_cfg);
    if fp != meta.mfcc_fingerprint {
        return Err(CliError::new(
            ErrorCode::ConfigMismatch,
            format!(
                "{} was built for MFCC config {fp:#010x} but the feature cache has {:#010x}",
                model_path.display(),
                meta.mfcc_fingerprint
            ),
        ));
    }
    Ok(())
}

fn clip_features(path: &Path, extractor: &MfccExtractor) -> std::result::Result<Vec<f32>, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let clip = decode_wav(&bytes).map_err(|e| e.to_string())?;
    clip_to_features(extractor, &clip).map(|fm| fm.values).map_err(|e| e.to_string())
}

pub fn run(cfg: &PipelineConfig, layout: &Layout, data: Option<&Path>) -> Result<FeatureMeta> {
    let mut rec = RunRecorder::start("extract", cfg);
    let entries = load_split(layout)?;
    rec.input(&layout.split());
    let root = match data {
        Some(d) => audio_root(d),
        None => {
            rec.input(&layout.dataset());
            layout::read_json::<DatasetInfo>(&layout.dataset(), "prepare")?.audio_root
        }
    };
    let extractor = MfccExtractor::new(cfg.mfcc).code(ErrorCode::Config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.extract.threads)
        .build()
        .map_err(|e| CliError::new(ErrorCode::Io, e.to_string()))?;
    // par_iter().collect() keeps manifest order, so the output never depends on scheduling
    let results: Vec<std::result::Result<Vec<f32>, String>> =
        pool.install(|| entries.par_iter().map(|e| clip_features(&root.join(&e.file_name), &extractor)).collect());

    let mut unreadable = Vec::new();
    for (e, r) in entries.iter().zip(&results) {
        if let Err(msg) = r {
            log::warn!("skipping {}: {msg}", e.file_name);
            unreadable.push(e.file_name.clone());
        }
    }
    let fraction = unreadable.len() as f64 / entries.len().max(1) as f64;
    if fraction > cfg.extract.max_unreadable_fraction {
        return Err(CliError::new(
            ErrorCode::UnreadableAudio,
            format!(
                "{} of {} clips unreadable ({:.1}% > {:.1}%), first: {}",
                unreadable.len(),
                entries.len(),
                100.0 * fraction,
                100.0 * cfg.extract.max_unreadable_fraction,
                unreadable[0]
            ),
        ));
    }

    let dim = cfg.mfcc.feature_len();
    let mut clips = BTreeMap::new();
    let mut train_vectors: Vec<&[f32]> = Vec::new();
    for p in Partition::ALL {
        let mut part = Vec::new();
        for (id, (e, r)) in entries.iter().zip(&results).enumerate() {
            if let (true, Ok(values)) = (e.partition == p, r) {
                part.push(CacheEntry { id: id as u32, values: values.clone() });
                if p == Partition::Train {
                    train_vectors.push(values);
                }
            }
        }
        let bytes = feature_cache::encode(&part, dim).code(ErrorCode::BadInput)?;
        layout::write_bytes(&layout.cache(p), &bytes)?;
        rec.output(&layout.cache(p));
        clips.insert(p.name().to_string(), part.len());
    }
    let stats: NormStats = fit_norm_stats(&train_vectors).with_code(ErrorCode::BadInput, "train partition")?;
    layout::write_json(&layout.norm_stats(), &stats)?;

    let meta = FeatureMeta { mfcc_fingerprint: mfcc_fingerprint(&cfg.mfcc), mfcc: cfg.mfcc, dim, clips, unreadable };
    layout::write_json(&layout.features_meta(), &meta)?;
    rec.output(&layout.norm_stats());
    rec.output(&layout.features_meta());
    log::info!("extracted {} clips ({} unreadable)", entries.len() - meta.unreadable.len(), meta.unreadable.len());
    rec.finish(&layout.root)?;
    Ok(meta)
}
