//! Session persistence.
//!
//! [`FsStore`] lays sessions out as
//!
//! ```text
//! <root>/sessions/<id>/session.json       current Session, replaced atomically
//!                     input.log          the upload, byte for byte
//!                     analysis.jsonl     one StoredAnalysis per line, in line order
//!                     interactions.jsonl append-only interaction log
//!                     feedback.jsonl     append-only feedback
//! <root>/interactions.jsonl               requests that named no known session
//! ```

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use logsight_core::attnlysis::AnalysisSummary;
use logsight_core::encoder::{Prediction, TokenAttribution};
use logsight_core::pipeline::LineAnalysis;
use logsight_core::reportgen::DetectionResponse;

use crate::questionnaire::Feedback;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt store record in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Uploaded,
    Analyzing,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub source_filename: String,
    pub status: SessionStatus,
    pub line_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnalysis {
    pub session_id: String,
    pub line_no: usize,
    pub prediction: Prediction,
    pub summary: AnalysisSummary,
    pub attribution: TokenAttribution,
    pub response: DetectionResponse,
}

impl StoredAnalysis {
    pub fn new(session_id: &str, a: LineAnalysis) -> Self {
        Self {
            session_id: session_id.to_string(),
            line_no: a.line_no,
            prediction: a.prediction,
            summary: a.summary,
            attribution: a.attribution,
            response: a.response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    /// HTTP status of the failed request.
    Error(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLogEntry {
    pub timestamp: DateTime<Utc>,
    pub session_id: Option<String>,
    pub endpoint: String,
    /// SHA-256 of method, path and body, hex encoded.
    pub request_digest: String,
    pub outcome: Outcome,
}

/// Pluggable document store behind the service.
pub trait SessionStore: Send + Sync {
    /// Persist a new session with its raw upload.
    fn create(&self, session: &Session, input: &[u8]) -> Result<(), StoreError>;
    fn session(&self, id: &str) -> Result<Option<Session>, StoreError>;
    fn update(&self, session: &Session) -> Result<(), StoreError>;
    fn list(&self) -> Result<Vec<Session>, StoreError>;
    fn input(&self, id: &str) -> Result<Vec<u8>, StoreError>;
    /// Write all per-line records at once; readers never see a partial set.
    fn put_analyses(&self, id: &str, records: &[StoredAnalysis]) -> Result<(), StoreError>;
    fn analysis(&self, id: &str, line_no: usize) -> Result<Option<StoredAnalysis>, StoreError>;
    fn analyses(&self, id: &str) -> Result<Vec<StoredAnalysis>, StoreError>;
    /// Append with a timestamp no earlier than the session's previous entry.
    fn log_interaction(
        &self,
        session_id: Option<&str>,
        endpoint: &str,
        request_digest: &str,
        outcome: Outcome,
    ) -> Result<InteractionLogEntry, StoreError>;
    fn interactions(&self, session_id: Option<&str>) -> Result<Vec<InteractionLogEntry>, StoreError>;
    fn append_feedback(&self, feedback: &Feedback) -> Result<(), StoreError>;
    fn feedback(&self, session_id: &str) -> Result<Vec<Feedback>, StoreError>;
}

pub struct FsStore {
    root: PathBuf,
    /// Serializes interaction appends; caches the last timestamp per log.
    log_lock: Mutex<HashMap<Option<String>, DateTime<Utc>>>,
    feedback_lock: Mutex<()>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(format!("{line}\n").as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    BufReader::new(f)
        .lines()
        .map(|line| {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt { path: path.into(), reason: e.to_string() })
        })
        .collect()
}

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Self {
            root,
            log_lock: Mutex::new(HashMap::new()),
            feedback_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    fn log_path(&self, session_id: Option<&str>) -> PathBuf {
        match session_id {
            Some(id) => self.dir(id).join("interactions.jsonl"),
            None => self.root.join("interactions.jsonl"),
        }
    }
}

impl SessionStore for FsStore {
    fn create(&self, session: &Session, input: &[u8]) -> Result<(), StoreError> {
        let dir = self.dir(&session.session_id);
        fs::create_dir(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join("input.log"), input)?;
        self.update(session)
    }

    fn session(&self, id: &str) -> Result<Option<Session>, StoreError> {
        let path = self.dir(id).join("session.json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt { path, reason: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn update(&self, session: &Session) -> Result<(), StoreError> {
        let json = serde_json::to_vec_pretty(session).expect("session serializes");
        write_atomic(&self.dir(&session.session_id).join("session.json"), &json)
    }

    fn list(&self) -> Result<Vec<Session>, StoreError> {
        let dir = self.root.join("sessions");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if let Some(s) = self.session(&entry.file_name().to_string_lossy())? {
                out.push(s);
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        Ok(out)
    }

    fn input(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.dir(id).join("input.log");
        fs::read(&path).map_err(io_err(&path))
    }

    fn put_analyses(&self, id: &str, records: &[StoredAnalysis]) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).expect("analysis serializes");
            buf.push(b'\n');
        }
        write_atomic(&self.dir(id).join("analysis.jsonl"), &buf)
    }

    fn analysis(&self, id: &str, line_no: usize) -> Result<Option<StoredAnalysis>, StoreError> {
        if line_no == 0 {
            return Ok(None);
        }
        let path = self.dir(id).join("analysis.jsonl");
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let Some(line) = BufReader::new(f).lines().nth(line_no - 1) else {
            return Ok(None);
        };
        let line = line.map_err(io_err(&path))?;
        let record: StoredAnalysis =
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt { path: path.clone(), reason: e.to_string() })?;
        if record.line_no != line_no {
            return Err(StoreError::Corrupt {
                path,
                reason: format!("expected line {line_no}, found {}", record.line_no),
            });
        }
        Ok(Some(record))
    }

    fn analyses(&self, id: &str) -> Result<Vec<StoredAnalysis>, StoreError> {
        read_jsonl(&self.dir(id).join("analysis.jsonl"))
    }

    fn log_interaction(
        &self,
        session_id: Option<&str>,
        endpoint: &str,
        request_digest: &str,
        outcome: Outcome,
    ) -> Result<InteractionLogEntry, StoreError> {
        let path = self.log_path(session_id);
        let mut last = self.log_lock.lock().unwrap_or_else(|p| p.into_inner());
        let key = session_id.map(str::to_string);
        let floor = match last.get(&key) {
            Some(t) => Some(*t),
            None => read_jsonl::<InteractionLogEntry>(&path)?.last().map(|e| e.timestamp),
        };
        let now = Utc::now();
        let timestamp = floor.map_or(now, |f| f.max(now));
        let entry = InteractionLogEntry {
            timestamp,
            session_id: key.clone(),
            endpoint: endpoint.to_string(),
            request_digest: request_digest.to_string(),
            outcome,
        };
        append_line(&path, &serde_json::to_string(&entry).expect("entry serializes"))?;
        last.insert(key, timestamp);
        Ok(entry)
    }

    fn interactions(&self, session_id: Option<&str>) -> Result<Vec<InteractionLogEntry>, StoreError> {
        let _guard = self.log_lock.lock().unwrap_or_else(|p| p.into_inner());
        read_jsonl(&self.log_path(session_id))
    }

    fn append_feedback(&self, feedback: &Feedback) -> Result<(), StoreError> {
        let _guard = self.feedback_lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.dir(&feedback.session_id).join("feedback.jsonl");
        append_line(&path, &serde_json::to_string(feedback).expect("feedback serializes"))
    }

    fn feedback(&self, session_id: &str) -> Result<Vec<Feedback>, StoreError> {
        read_jsonl(&self.dir(session_id).join("feedback.jsonl"))
    }
}
