//! Full per-line analysis shared by the service and the command line:
//! predict, summarize attention, attribute, and build the response.

use serde::{Deserialize, Serialize};

use crate::attnlysis::{analyze, AnalysisConfig, AnalysisError, AnalysisSummary};
use crate::encoder::{integrated_gradients, predict, Checkpoint, EncoderError, Prediction, TokenAttribution};
use crate::logcore::LogRecord;
use crate::reportgen::{render_analysis_report, render_detection_response, DetectionResponse, ResponseCatalog};

pub const DEFAULT_IG_STEPS: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("line {line}: {source}")]
    Encoder { line: usize, source: EncoderError },
    #[error("line {line}: {source}")]
    Analysis { line: usize, source: AnalysisError },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub analysis: AnalysisConfig,
    pub ig_steps: usize,
    pub catalog: ResponseCatalog,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig::default(),
            ig_steps: DEFAULT_IG_STEPS,
            catalog: ResponseCatalog::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineAnalysis {
    pub line_no: usize,
    pub prediction: Prediction,
    pub summary: AnalysisSummary,
    pub attribution: TokenAttribution,
    pub response: DetectionResponse,
}

impl LineAnalysis {
    pub fn report_text(&self) -> String {
        render_analysis_report(&self.summary).1
    }
}

pub fn analyze_line(record: &LogRecord, checkpoint: &Checkpoint, cfg: &PipelineConfig) -> Result<LineAnalysis, PipelineError> {
    let line = record.line_no;
    let enc = |source| PipelineError::Encoder { line, source };
    let prediction = predict(&record.normalized_text, &checkpoint.params, &checkpoint.vocab).map_err(enc)?;
    let summary = analyze(&prediction.attentions, &prediction.tokens, &cfg.analysis)
        .map_err(|source| PipelineError::Analysis { line, source })?;
    let attribution =
        integrated_gradients(&record.normalized_text, &checkpoint.params, &checkpoint.vocab, cfg.ig_steps).map_err(enc)?;
    let response = render_detection_response(&prediction, record, &cfg.catalog);
    Ok(LineAnalysis {
        line_no: line,
        prediction,
        summary,
        attribution,
        response,
    })
}
