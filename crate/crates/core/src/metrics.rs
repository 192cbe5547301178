//! Confusion matrices, per-class metrics and macro/weighted F1.
//!
//! Any quotient whose denominator is zero evaluates to 0.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

use crate::logcore::Label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} truth labels but {pred} predictions")]
    Shape { truth: usize, pred: usize },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("per-class metrics and supports cover different classes")]
    KeyMismatch,
    #[error("total support is zero")]
    NoSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub positive: Label,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(positive: Label, tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { positive, tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts seen from the other class.
    pub fn swapped(&self) -> Self {
        Self {
            positive: self.positive.other(),
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_from_predictions(truth: &[Label], pred: &[Label], positive: Label) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::Shape { truth: truth.len(), pred: pred.len() });
    }
    let mut cm = ConfusionMatrix::new(positive, 0, 0, 0, 0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(ClassMetrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision: ratio(cm.tp, cm.tp + cm.fp),
        recall: ratio(cm.tp, cm.tp + cm.fn_),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    })
}

/// `(macro_f1, weighted_f1)`.
pub fn aggregate(
    per_class: &BTreeMap<Label, ClassMetrics>,
    support: &BTreeMap<Label, u64>,
) -> Result<(f64, f64), MetricsError> {
    if per_class.is_empty() || !per_class.keys().eq(support.keys()) {
        return Err(MetricsError::KeyMismatch);
    }
    let total: u64 = support.values().sum();
    if total == 0 {
        return Err(MetricsError::NoSupport);
    }
    let macro_f1 = per_class.values().map(|m| m.f1).sum::<f64>() / per_class.len() as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|(k, m)| support[k] as f64 * m.f1)
        .sum::<f64>()
        / total as f64;
    Ok((macro_f1, weighted_f1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, ClassMetrics>,
    pub support: BTreeMap<Label, u64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl MetricsReport {
    /// Both class orientations of one matrix.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self, MetricsError> {
        let mut per_class = BTreeMap::new();
        let mut support = BTreeMap::new();
        for m in [*cm, cm.swapped()] {
            per_class.insert(m.positive, class_metrics(&m)?);
            support.insert(m.positive, m.tp + m.fn_);
        }
        let (macro_f1, weighted_f1) = aggregate(&per_class, &support)?;
        Ok(Self {
            accuracy: per_class[&cm.positive].accuracy,
            per_class,
            support,
            macro_f1,
            weighted_f1,
        })
    }

    pub fn from_predictions(truth: &[Label], pred: &[Label]) -> Result<Self, MetricsError> {
        Self::from_confusion(&confusion_from_predictions(truth, pred, Label::Anomaly)?)
    }

    /// Plain-text table: one row per class with precision, recall, F1 and
    /// support, then accuracy and the two F1 averages.
    pub fn to_table(&self, model: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Model: {model}");
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>9}", "Class", "Precision", "Recall", "F1", "Support");
        for (label, m) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                label.to_string(),
                m.precision,
                m.recall,
                m.f1,
                self.support[label]
            );
        }
        let _ = writeln!(out, "{:<10} {:>9.3}", "Accuracy", self.accuracy);
        let _ = writeln!(out, "{:<10} {:>9.2}", "Macro F1", self.macro_f1);
        let _ = writeln!(out, "{:<10} {:>9.2}", "Weighted F1", self.weighted_f1);
        out
    }
}
