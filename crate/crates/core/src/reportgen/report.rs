use serde::{Deserialize, Serialize};
use std::fmt::Write;

use crate::attnlysis::AnalysisSummary;

pub const REPORT_HEADINGS: [&str; 4] = [
    "Top Attended Tokens",
    "Most Focused Heads",
    "Standout Layers",
    "Special Token Bias Warnings",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub sections: Vec<ReportSection>,
    pub source_summary: AnalysisSummary,
}

impl ReportDocument {
    /// Each heading on its own line followed by a colon, then the indented
    /// body lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "{}:", s.heading);
            for line in s.body.lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
        out
    }
}

fn lines_or_none(lines: Vec<String>) -> String {
    if lines.is_empty() {
        "None".to_string()
    } else {
        lines.join("\n")
    }
}

/// Values are printed with exactly three decimals.
pub fn render_analysis_report(summary: &AnalysisSummary) -> (ReportDocument, String) {
    let tokens = summary
        .saliency
        .top_tokens
        .iter()
        .enumerate()
        .map(|(rank, t)| format!("{}. {} (position {}): {:.3}", rank + 1, t.token, t.position, t.score))
        .collect();
    let heads = summary
        .focused_heads
        .iter()
        .map(|h| format!("layer {}, head {}: avg entropy {:.3}", h.layer, h.head, h.avg_entropy))
        .collect();
    let layers = summary
        .standout_layers
        .iter()
        .map(|l| format!("layer {}: focus score {:.3}", l.layer, l.focus_score))
        .collect();
    let bias = summary
        .bias_warnings
        .iter()
        .map(|b| {
            format!(
                "layer {}, head {}: {} at position {} receives {:.3} of attention on average",
                b.layer, b.head, b.token, b.position, b.avg_focus
            )
        })
        .collect();
    let bodies: [String; 4] = [tokens, heads, layers, bias].map(lines_or_none);
    let doc = ReportDocument {
        sections: REPORT_HEADINGS
            .iter()
            .zip(bodies)
            .map(|(h, body)| ReportSection { heading: h.to_string(), body })
            .collect(),
        source_summary: summary.clone(),
    };
    let text = doc.to_text();
    (doc, text)
}
