use serde::{Deserialize, Serialize};
use std::fmt::{self, Write};
use std::path::Path;

use super::ReportError;
use crate::encoder::Prediction;
use crate::logcore::{Label, LogRecord};

const DEFAULT_CATALOG: &str = include_str!("../../catalog/hdfs_responses.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    /// High from 0.9, Medium from 0.7, Low below.
    pub fn from_confidence(confidence: f64) -> Self {
        if confidence >= 0.9 {
            Severity::High
        } else if confidence >= 0.7 {
            Severity::Medium
        } else {
            Severity::Low
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub causes: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRule {
    pub name: String,
    /// Matched case-insensitively as substrings of the normalized line.
    pub keywords: Vec<String>,
    pub causes: Vec<String>,
    pub actions: Vec<String>,
}

/// Ordered keyword rules; the first rule with a matching keyword wins,
/// otherwise `default` applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCatalog {
    pub rules: Vec<CatalogRule>,
    pub default: CatalogEntry,
}

impl Default for ResponseCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}

impl ResponseCatalog {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let catalog: Self = serde_json::from_str(text).map_err(|e| ReportError::Catalog(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.default.causes.is_empty() || self.default.actions.is_empty() {
            return Err(ReportError::Catalog("default entry needs causes and actions".into()));
        }
        for rule in &self.rules {
            if rule.keywords.iter().all(|k| k.trim().is_empty()) {
                return Err(ReportError::Catalog(format!("rule {} has no keywords", rule.name)));
            }
            if rule.causes.is_empty() || rule.actions.is_empty() {
                return Err(ReportError::Catalog(format!("rule {} needs causes and actions", rule.name)));
            }
        }
        Ok(())
    }

    /// The causes and actions for a line, plus the matching rule name.
    pub fn lookup(&self, text: &str) -> (Option<&str>, &[String], &[String]) {
        let text = text.to_lowercase();
        for rule in &self.rules {
            let hit = rule
                .keywords
                .iter()
                .any(|k| !k.trim().is_empty() && text.contains(&k.to_lowercase()));
            if hit {
                return (Some(&rule.name), &rule.causes, &rule.actions);
            }
        }
        (None, &self.default.causes, &self.default.actions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub event: String,
    pub verdict: Label,
    pub severity: Severity,
    pub possible_causes: Vec<String>,
    pub recommended_actions: Vec<String>,
    pub confidence: f64,
}

impl DetectionResponse {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Event: {}", self.event);
        let _ = writeln!(out, "Verdict: {} (confidence {:.3})", self.verdict, self.confidence);
        let _ = writeln!(out, "Severity: {}", self.severity);
        if self.verdict == Label::Normal {
            let _ = writeln!(out, "No anomaly detected.");
            return out;
        }
        let _ = writeln!(out, "Possible causes:");
        for c in &self.possible_causes {
            let _ = writeln!(out, "  - {c}");
        }
        let _ = writeln!(out, "Recommended actions:");
        for a in &self.recommended_actions {
            let _ = writeln!(out, "  - {a}");
        }
        out
    }
}

/// Normal verdicts get the standard response with severity Low and no
/// causes or actions.
pub fn render_detection_response(pred: &Prediction, record: &LogRecord, catalog: &ResponseCatalog) -> DetectionResponse {
    let event = record.normalized_text.clone();
    if pred.label == Label::Normal {
        return DetectionResponse {
            event,
            verdict: Label::Normal,
            severity: Severity::Low,
            possible_causes: Vec::new(),
            recommended_actions: Vec::new(),
            confidence: pred.confidence,
        };
    }
    let (_, causes, actions) = catalog.lookup(&event);
    DetectionResponse {
        severity: Severity::from_confidence(pred.confidence),
        possible_causes: causes.to_vec(),
        recommended_actions: actions.to_vec(),
        confidence: pred.confidence,
        verdict: Label::Anomaly,
        event,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::AttentionStack;

    fn pred(label: Label, confidence: f64) -> Prediction {
        Prediction {
            label,
            confidence,
            tokens: vec!["<s>".into(), "</s>".into()],
            attentions: AttentionStack::from_flat(1, 1, 2, vec![0.5; 4]).unwrap(),
        }
    }

    #[test]
    fn bundled_catalog_loads() {
        let c = ResponseCatalog::default();
        assert!(c.rules.len() >= 5);
    }

    #[test]
    fn normal_is_standard_response() {
        let rec = LogRecord::new(1, "Verification succeeded for blk_1", Some(Label::Normal));
        let r = render_detection_response(&pred(Label::Normal, 0.99), &rec, &ResponseCatalog::default());
        assert!(r.possible_causes.is_empty() && r.recommended_actions.is_empty());
        assert_eq!(r.severity, Severity::Low);
        assert!(r.to_text().contains("No anomaly detected"));
    }

    #[test]
    fn severity_bands() {
        let rec = LogRecord::new(1, "Reported corrupt block blk_7", None);
        let cat = ResponseCatalog::default();
        let r = render_detection_response(&pred(Label::Anomaly, 0.95), &rec, &cat);
        assert_eq!(r.severity, Severity::High);
        assert_eq!(r.possible_causes, cat.rules[0].causes);
        assert_eq!(render_detection_response(&pred(Label::Anomaly, 0.70), &rec, &cat).severity, Severity::Medium);
        assert_eq!(render_detection_response(&pred(Label::Anomaly, 0.6999), &rec, &cat).severity, Severity::Low);
        assert_eq!(render_detection_response(&pred(Label::Anomaly, 0.9), &rec, &cat).severity, Severity::High);
    }

    #[test]
    fn bands_cover_the_confidence_range() {
        let mut prev = Severity::Low;
        for i in 0..=5000 {
            let s = Severity::from_confidence(0.5 + i as f64 / 10000.0);
            assert!(s >= prev);
            prev = s;
        }
        assert_eq!(prev, Severity::High);
    }

    #[test]
    fn first_matching_rule_wins() {
        let cat = ResponseCatalog::default();
        let (name, _, _) = cat.lookup("write failed for block <BLK> to mirror <IP>:<NUM> broken pipe");
        assert_eq!(name, Some("broken-pipeline"));
        let (name, causes, _) = cat.lookup("something novel happened");
        assert_eq!(name, None);
        assert_eq!(causes, cat.default.causes.as_slice());
    }

    #[test]
    fn every_synthetic_anomaly_gets_causes() {
        let cat = ResponseCatalog::default();
        for r in crate::logcore::generate_synthetic_corpus(0, 200, 5) {
            let resp = render_detection_response(&pred(Label::Anomaly, 0.8), &r, &cat);
            assert!(!resp.possible_causes.is_empty() && !resp.recommended_actions.is_empty());
            assert_ne!(cat.lookup(&r.normalized_text).0, None, "{}", r.normalized_text);
        }
    }

    #[test]
    fn invalid_catalogs() {
        assert!(ResponseCatalog::from_json(r#"{"rules":[],"default":{"causes":[],"actions":["x"]}}"#).is_err());
        assert!(ResponseCatalog::from_json(
            r#"{"rules":[{"name":"r","keywords":[" "],"causes":["c"],"actions":["a"]}],"default":{"causes":["c"],"actions":["a"]}}"#
        )
        .is_err());
        assert!(ResponseCatalog::from_json("[]").is_err());
    }
}
