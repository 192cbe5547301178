//! Parsing, normalization, splitting and synthesis of log datasets.

mod dataset;
mod normalize;
mod synth;

pub use dataset::{
    parse_dataset, parse_text, split_dataset, write_labeled_tsv, DatasetFormat, DatasetSplit,
    Label, LogRecord, SplitSizes,
};
pub use normalize::{default_rules, normalize_line, NormalizationRule};
pub use synth::generate_synthetic_corpus;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("split needs {required} records but only {available} are available")]
    Sizing { required: usize, available: usize },
    #[error("record {line} has no label")]
    Unlabeled { line: usize },
}
