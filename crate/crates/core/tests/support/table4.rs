//! Printed cells of the published comparison table, with the confusion
//! matrices reconstructed from them (477 Normal / 23 Anomaly test lines for
//! Falcon and DeBERTa, 478 / 22 for RoBERTa).

#![allow(dead_code)]

use logsight_core::logcore::Label;
use logsight_core::metrics::{ConfusionMatrix, MetricsReport};

pub struct Row {
    pub model: &'static str,
    /// Anomaly-positive counts: tp, tn, fp, fn.
    pub counts: (u64, u64, u64, u64),
    /// Accuracy is printed with four decimals.
    pub accuracy: &'static str,
    /// Precision, recall, F1 for Normal, then for Anomaly, then macro and
    /// weighted F1, all at two decimals.
    pub cells: [&'static str; 8],
}

pub const ROWS: [Row; 3] = [
    Row {
        model: "Falcon-7B",
        counts: (0, 477, 0, 23),
        accuracy: "0.9540",
        cells: ["0.95", "1.00", "0.98", "0.00", "0.00", "0.00", "0.49", "0.93"],
    },
    Row {
        model: "RoBERTa",
        counts: (20, 478, 0, 2),
        accuracy: "0.9960",
        cells: ["1.00", "1.00", "1.00", "1.00", "0.91", "0.95", "0.98", "1.00"],
    },
    Row {
        model: "DeBERTa",
        counts: (15, 477, 0, 8),
        accuracy: "0.9840",
        cells: ["0.98", "1.00", "0.99", "1.00", "0.65", "0.79", "0.89", "0.98"],
    },
];

/// Every mismatching cell as `(column, computed, printed)`.
pub fn check_row(row: &Row) -> Vec<(String, String, String)> {
    let (tp, tn, fp, fn_) = row.counts;
    let r = MetricsReport::from_confusion(&ConfusionMatrix::new(Label::Anomaly, tp, tn, fp, fn_)).unwrap();
    let n = r.per_class[&Label::Normal];
    let a = r.per_class[&Label::Anomaly];
    let computed = [n.precision, n.recall, n.f1, a.precision, a.recall, a.f1, r.macro_f1, r.weighted_f1];
    let names = ["P(N)", "R(N)", "F1(N)", "P(A)", "R(A)", "F1(A)", "Macro F1", "Weighted F1"];
    let mut bad = Vec::new();
    let acc = format!("{:.4}", r.accuracy);
    if acc != row.accuracy {
        bad.push(("Accuracy".to_string(), acc, row.accuracy.to_string()));
    }
    for ((name, value), printed) in names.iter().zip(computed).zip(row.cells) {
        let shown = format!("{value:.2}");
        if shown != printed {
            bad.push((name.to_string(), shown, printed.to_string()));
        }
    }
    bad
}
