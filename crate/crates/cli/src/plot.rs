use std::path::{Path, PathBuf};

use esad_core::metrics::EvalReport;
use esad_core::nn::TrainHistory;

use crate::config::PipelineConfig;
use crate::error::{CliError, ErrorCode, Result};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;
use crate::svg::{confusion_chart, line_chart, Axes, Series};

fn history_series(h: &TrainHistory) -> [(String, Vec<Series>); 2] {
    let pick = |f: fn(&esad_core::nn::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        h.epochs.iter().map(|r| ((r.epoch + 1) as f64, f(r))).collect()
    };
    [
        (
            "loss".to_string(),
            vec![
                Series { name: "train".into(), points: pick(|r| r.train_loss) },
                Series { name: "validation".into(), points: pick(|r| r.val_loss) },
            ],
        ),
        (
            "accuracy".to_string(),
            vec![
                Series { name: "train".into(), points: pick(|r| r.train_accuracy) },
                Series { name: "validation".into(), points: pick(|r| r.val_accuracy) },
            ],
        ),
    ]
}

/// Loss and accuracy curves; returns the written paths.
pub fn plot_history(h: &TrainHistory, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let n = h.epochs.len();
    for (metric, series) in history_series(h) {
        let axes = Axes::fit(&series, "epoch", &metric);
        let title = format!("Training and validation {metric} across {n} epochs");
        let path = dir.join(format!("{metric}.svg"));
        layout::write_bytes(&path, line_chart(&title, &axes, &series, None).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Confusion matrix, ROC and PR charts for one report.
pub fn plot_report(r: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let m = &r.model;
    let roc = Series { name: format!("{m} (AUC {:.3})", r.roc_auc), points: r.roc_curve.iter().map(|&[x, y]| (x, y)).collect() };
    let pr = Series {
        name: format!("{m} (AP {:.3})", r.average_precision),
        points: r.pr_curve.iter().map(|&[x, y]| (x, y)).collect(),
    };
    let charts = [
        (format!("confusion_{m}.svg"), confusion_chart(&format!("Confusion matrix, {m}, {} population", r.population), &r.confusion)),
        (
            format!("roc_{m}.svg"),
            line_chart(&format!("ROC curve, {m}"), &Axes::unit("false positive rate", "true positive rate"), &[roc], Some([(0.0, 0.0), (1.0, 1.0)])),
        ),
        (format!("pr_{m}.svg"), line_chart(&format!("Precision-recall curve, {m}"), &Axes::unit("recall", "precision"), &[pr], None)),
    ];
    let mut written = Vec::new();
    for (name, svg) in charts {
        let path = dir.join(name);
        layout::write_bytes(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn read_report(path: &Path) -> Result<EvalReport> {
    layout::read_json(path, "evaluate")
}

/// Explicit paths must exist; without them, whatever the default locations hold is plotted.
pub fn run(cfg: &PipelineConfig, layout: &Layout, history: Option<&Path>, reports: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut rec = RunRecorder::start("plot", cfg);
    let history_path = match history {
        Some(p) => Some(p.to_path_buf()),
        None => Some(layout.history()).filter(|p| p.is_file()),
    };
    let report_paths: Vec<PathBuf> = if reports.is_empty() && history.is_none() {
        ["float32", "int8"].iter().map(|f| layout.report(f)).filter(|p| p.is_file()).collect()
    } else {
        reports.to_vec()
    };
    if history_path.is_none() && report_paths.is_empty() {
        return Err(CliError::new(
            ErrorCode::MissingArtifact,
            format!("nothing to plot: expected {} or {} (run `esad train` / `esad evaluate` first)", layout.history().display(), layout.report("float32").display()),
        ));
    }

    let dir = layout.plots_dir();
    let mut written = Vec::new();
    if let Some(p) = &history_path {
        let text = layout::read_text_artifact(p, "train")?;
        let h = TrainHistory::from_csv(&text).map_err(|e| CliError::new(ErrorCode::BadInput, format!("{}: {e}", p.display())))?;
        if h.epochs.is_empty() {
            return Err(CliError::new(ErrorCode::BadInput, format!("{}: no epochs", p.display())));
        }
        written.extend(plot_history(&h, &dir)?);
        rec.input(p);
    }
    for p in &report_paths {
        written.extend(plot_report(&read_report(p)?, &dir)?);
        rec.input(p);
    }
    for p in &written {
        rec.output(p);
    }
    log::info!("wrote {} plots to {}", written.len(), dir.display());
    rec.finish(&layout.root)?;
    Ok(written)
}
