use esad_core::dataset::Partition;
use esad_core::feature_cache::CacheEntry;
use esad_core::metrics::{evaluate_scores, EvalReport, ScoredExample};
use esad_core::model_store::StoredModel;

use crate::config::{PipelineConfig, Population};
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::extract::{check_fingerprint, load_cache, load_meta, load_split, FeatureMeta};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;
use crate::quantize::load_model_file;

fn display_name(flavor: &str) -> &str {
    match flavor {
        "float32" => "Original (float32)",
        "int8" => "Quantized (int8)",
        other => other,
    }
}

/// Four headline metrics, one row per model.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("| Model | Accuracy | F1-score | ROC AUC | Average Precision |\n|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            display_name(&r.model),
            r.accuracy,
            r.macro_f1,
            r.roc_auc,
            r.average_precision
        ));
    }
    out
}

/// Per-class precision, recall, F1 and support for one model.
pub fn classwise_table(r: &EvalReport) -> String {
    let mut out = format!(
        "{} on {} ({} clips)\n\n| Class | Precision | Recall | F1-score | Support |\n|---|---|---|---|---|\n",
        display_name(&r.model),
        r.population,
        r.total
    );
    for c in &r.classes {
        out.push_str(&format!("| {} | {:.4} | {:.4} | {:.4} | {} |\n", c.class, c.precision, c.recall, c.f1, c.support));
    }
    out
}

fn population_entries(layout: &Layout, meta: &FeatureMeta, population: Population) -> Result<Vec<CacheEntry>> {
    let parts: &[Partition] = match population {
        Population::Test => &[Partition::Test],
        Population::All => &Partition::ALL,
    };
    let mut entries = Vec::new();
    for &p in parts {
        entries.extend(load_cache(layout, meta, p)?);
    }
    entries.sort_by_key(|e| e.id);
    Ok(entries)
}

/// Scores every clip with the model's own embedded normalization.
pub fn score(model: &StoredModel, entries: &[CacheEntry], labels: &[esad_core::dataset::BinaryLabel]) -> Result<Vec<ScoredExample>> {
    entries
        .iter()
        .zip(labels)
        .map(|(e, &label)| {
            let x = model.norm_stats().apply(&e.values).code(ErrorCode::BadInput)?;
            let p = model.predict(&x).code(ErrorCode::Metrics)?;
            Ok(ScoredExample::new(p, label))
        })
        .collect()
}

pub fn run(cfg: &PipelineConfig, layout: &Layout) -> Result<Vec<EvalReport>> {
    let mut rec = RunRecorder::start("evaluate", cfg);
    let split = load_split(layout)?;
    let meta = load_meta(layout)?;
    let models = [
        (layout.float_model(), load_model_file(&layout.float_model(), "train")?),
        (layout.int8_model(), load_model_file(&layout.int8_model(), "quantize")?),
    ];
    for (path, m) in &models {
        check_fingerprint(&meta, m.mfcc(), path)?;
        rec.input(path);
    }
    let entries = population_entries(layout, &meta, cfg.population)?;
    rec.input(&layout.split());
    rec.input(&layout.features_meta());
    let labels = entries
        .iter()
        .map(|e| {
            split.get(e.id as usize).map(|m| m.label).ok_or_else(|| {
                CliError::new(ErrorCode::BadInput, format!("feature cache id {} is not in the split manifest", e.id))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for (_, model) in &models {
        let scored = score(model, &entries, &labels)?;
        let flavor = model.flavor_name();
        let report = evaluate_scores(&scored, flavor, cfg.population.name(), cfg.evaluate.threshold).code(ErrorCode::Metrics)?;
        layout::write_json(&layout.report(flavor), &report)?;
        layout::write_bytes(&layout.roc_csv(flavor), report.roc_csv().as_bytes())?;
        layout::write_bytes(&layout.pr_csv(flavor), report.pr_csv().as_bytes())?;
        for p in [layout.report(flavor), layout.roc_csv(flavor), layout.pr_csv(flavor)] {
            rec.output(&p);
        }
        reports.push(report);
    }

    let mut text = comparison_table(&reports);
    for r in &reports {
        text.push('\n');
        text.push_str(&classwise_table(r));
    }
    layout::write_bytes(&layout.comparison(), text.as_bytes())?;
    rec.output(&layout.comparison());
    print!("{text}");
    rec.finish(&layout.root)?;
    Ok(reports)
}
