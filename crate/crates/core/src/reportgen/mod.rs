//! Template-based detection responses, the plain-text attention report and
//! readability scoring.

mod readability;
mod report;
mod response;

pub use readability::{count_syllables, readability_scores, ReadabilityCounts, ReadabilityScores};
pub use report::{render_analysis_report, ReportDocument, ReportSection, REPORT_HEADINGS};
pub use response::{render_detection_response, CatalogEntry, CatalogRule, DetectionResponse, ResponseCatalog, Severity};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("invalid response catalog: {0}")]
    Catalog(String),
    #[error("text has no {0}")]
    EmptyText(&'static str),
    #[error("catalog i/o: {0}")]
    Io(#[from] std::io::Error),
}
