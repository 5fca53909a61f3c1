//! Binary classification metrics. `Anomalous` is the positive class and a
//! score `>= threshold` predicts it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryLabel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no examples")]
    Empty,
    #[error("only one class present; metric is undefined")]
    SingleClass,
    #[error("no positive examples")]
    NoPositives,
    #[error("score {score} at index {index} is not a probability")]
    BadScore { index: usize, score: f64 },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    pub label: BinaryLabel,
}

impl ScoredExample {
    pub fn new(score: f64, label: BinaryLabel) -> Self {
        Self { score, label }
    }

    fn positive(&self) -> bool {
        self.label == BinaryLabel::Anomalous
    }
}

fn check(examples: &[ScoredExample]) -> Result<()> {
    if examples.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, e) in examples.iter().enumerate() {
        if !(e.score.is_finite() && (0.0..=1.0).contains(&e.score)) {
            return Err(MetricsError::BadScore { index, score: e.score });
        }
    }
    Ok(())
}

fn require_both_classes(examples: &[ScoredExample]) -> Result<(usize, usize)> {
    let pos = examples.iter().filter(|e| e.positive()).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

pub fn confusion_at_threshold(examples: &[ScoredExample], threshold: f64) -> Result<Confusion> {
    check(examples)?;
    let mut c = Confusion { tn: 0, fp: 0, fn_: 0, tp: 0 };
    for e in examples {
        match (e.score >= threshold, e.positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(class: BinaryLabel, tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassMetrics { class: class.name().to_string(), precision, recall, f1, support: tp + fn_ }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: Confusion,
    /// `[normal, anomalous]`.
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Per-class precision/recall/F1/support at `threshold`, each class in turn treated as positive.
pub fn classification_report(examples: &[ScoredExample], threshold: f64) -> Result<ClassificationReport> {
    check(examples)?;
    require_both_classes(examples)?;
    let c = confusion_at_threshold(examples, threshold)?;
    let normal = class_metrics(BinaryLabel::Normal, c.tn, c.fn_, c.fp);
    let anomalous = class_metrics(BinaryLabel::Anomalous, c.tp, c.fp, c.fn_);
    let macro_f1 = (normal.f1 + anomalous.f1) / 2.0;
    Ok(ClassificationReport { confusion: c, accuracy: c.accuracy(), classes: vec![normal, anomalous], macro_f1 })
}

/// Distinct scores in descending order with cumulative (tp, fp) counts.
fn sweep(examples: &[ScoredExample]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<&ScoredExample> = examples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, e) in sorted.iter().enumerate() {
        if e.positive() {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = i + 1 == sorted.len() || sorted[i + 1].score != e.score;
        if last_of_group {
            out.push((e.score, tp, fp));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub threshold: f64,
}

/// ROC AUC by the trapezoidal rule over `(fpr, tpr)`; curve starts at (0, 0)
/// with a sentinel threshold above every score and ends at (1, 1).
pub fn roc_auc(examples: &[ScoredExample]) -> Result<(f64, Vec<CurvePoint>)> {
    check(examples)?;
    let (pos, neg) = require_both_classes(examples)?;
    let mut curve = vec![CurvePoint { x: 0.0, y: 0.0, threshold: f64::INFINITY }];
    for (score, tp, fp) in sweep(examples) {
        curve.push(CurvePoint { x: fp as f64 / neg as f64, y: tp as f64 / pos as f64, threshold: score });
    }
    let auc = curve.windows(2).map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0).sum();
    Ok((auc, curve))
}

/// Step-wise average precision `sum (R_k - R_{k-1}) * P_k`; curve points are
/// `(recall, precision)` at every distinct threshold, highest first.
pub fn average_precision(examples: &[ScoredExample]) -> Result<(f64, Vec<CurvePoint>)> {
    check(examples)?;
    let pos = examples.iter().filter(|e| e.positive()).count();
    if pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut curve = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (score, tp, fp) in sweep(examples) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.push(CurvePoint { x: recall, y: precision, threshold: score });
    }
    Ok((ap, curve))
}

/// Everything reported for one model on one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub population: String,
    pub threshold: f64,
    pub total: usize,
    pub confusion: Confusion,
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub roc_auc: f64,
    pub average_precision: f64,
    /// `[fpr, tpr]` pairs.
    pub roc_curve: Vec<[f64; 2]>,
    /// `[recall, precision]` pairs.
    pub pr_curve: Vec<[f64; 2]>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn evaluate_scores(examples: &[ScoredExample], model: &str, population: &str, threshold: f64) -> Result<EvalReport> {
    let report = classification_report(examples, threshold)?;
    let (auc, roc) = roc_auc(examples)?;
    let (ap, pr) = average_precision(examples)?;
    Ok(EvalReport {
        model: model.to_string(),
        population: population.to_string(),
        threshold,
        total: examples.len(),
        confusion: report.confusion,
        classes: report.classes,
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        roc_auc: auc,
        average_precision: ap,
        roc_curve: roc.iter().map(|p| [p.x, p.y]).collect(),
        pr_curve: pr.iter().map(|p| [p.x, p.y]).collect(),
    })
}

impl EvalReport {
    pub fn class(&self, label: BinaryLabel) -> &ClassMetrics {
        &self.classes[label.as_u8() as usize]
    }

    pub fn roc_csv(&self) -> String {
        curve_csv("fpr,tpr", &self.roc_curve)
    }

    pub fn pr_csv(&self) -> String {
        curve_csv("recall,precision", &self.pr_curve)
    }
}

fn curve_csv(header: &str, points: &[[f64; 2]]) -> String {
    let mut out = format!("{header}\n");
    for [x, y] in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
