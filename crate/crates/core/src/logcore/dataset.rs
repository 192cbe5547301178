use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

use super::normalize::{default_rules, normalize_line};
use super::LogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Anomaly];

    /// Class index used by the classifier head.
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Normal
        } else {
            Label::Anomaly
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Normal => Label::Anomaly,
            Label::Anomaly => Label::Normal,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("Normal"),
            Label::Anomaly => f.write_str("Anomaly"),
        }
    }
}

/// One log line together with its normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub line_no: usize,
    pub raw_text: String,
    pub normalized_text: String,
    pub label: Option<Label>,
}

impl LogRecord {
    pub fn new(line_no: usize, raw_text: &str, label: Option<Label>) -> Self {
        Self {
            line_no,
            raw_text: raw_text.to_string(),
            normalized_text: normalize_line(raw_text, default_rules()),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    /// `<0|1>\t<text>` per line, 1 = anomaly.
    LabeledTsv,
    RawLines,
}

/// Parse an in-memory document; see [`parse_dataset`].
pub fn parse_text(text: &str, format: DatasetFormat) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let file_line = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = records.len() + 1;
        let record = match format {
            DatasetFormat::RawLines => LogRecord::new(line_no, line, None),
            DatasetFormat::LabeledTsv => {
                let (label, body) = line.split_once('\t').ok_or_else(|| LogError::Parse {
                    line: file_line,
                    reason: "missing tab separator".into(),
                })?;
                let label = match label {
                    "0" => Label::Normal,
                    "1" => Label::Anomaly,
                    other => {
                        return Err(LogError::Parse {
                            line: file_line,
                            reason: format!("label {other:?} is not 0 or 1"),
                        })
                    }
                };
                LogRecord::new(line_no, body, Some(label))
            }
        };
        records.push(record);
    }
    Ok(records)
}

pub fn parse_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<LogRecord>, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_text(&text, format)
}

/// Serialize labeled records as labeled TSV.
pub fn write_labeled_tsv<W: Write>(records: &[LogRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        let label = match r.label {
            Some(Label::Anomaly) => '1',
            Some(Label::Normal) => '0',
            None => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("record {} has no label", r.line_no),
                ))
            }
        };
        writeln!(out, "{label}\t{}", r.raw_text)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LogRecord>,
    pub val: Vec<LogRecord>,
    pub test: Vec<LogRecord>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 4000,
            val: 500,
            test: 500,
        }
    }
}

/// Seeded shuffle followed by contiguous train / val / test slices.
pub fn split_dataset(
    records: &[LogRecord],
    sizes: SplitSizes,
    seed: u64,
) -> Result<DatasetSplit, LogError> {
    if sizes.total() > records.len() {
        return Err(LogError::Sizing {
            required: sizes.total(),
            available: records.len(),
        });
    }
    if let Some(r) = records.iter().find(|r| r.label.is_none()) {
        return Err(LogError::Unlabeled { line: r.line_no });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| -> Vec<LogRecord> {
        order[range].iter().map(|&i| records[i].clone()).collect()
    };
    let a = sizes.train;
    let b = a + sizes.val;
    let c = b + sizes.test;
    Ok(DatasetSplit {
        train: take(0..a),
        val: take(a..b),
        test: take(b..c),
        seed,
    })
}
