//! Service configuration: an optional TOML file, then environment overrides.
//!
//! | key                 | environment variable          | default        |
//! |---------------------|-------------------------------|----------------|
//! | `bind`              | `LOGSIGHT_BIND`               | `127.0.0.1`    |
//! | `port`              | `LOGSIGHT_PORT`               | `8080`         |
//! | `store_path`        | `LOGSIGHT_STORE`              | `logsight-data`|
//! | `checkpoint_path`   | `LOGSIGHT_CHECKPOINT`         | unset          |
//! | `max_upload_bytes`  | `LOGSIGHT_MAX_UPLOAD_BYTES`   | 10 MiB         |
//! | `questionnaire_path`| `LOGSIGHT_QUESTIONNAIRE`      | built-in       |
//! | `catalog_path`      | `LOGSIGHT_CATALOG`            | built-in       |

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value {value:?} for {var}")]
    Env { var: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub store_path: PathBuf,
    pub checkpoint_path: Option<PathBuf>,
    pub max_upload_bytes: usize,
    pub questionnaire_path: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            store_path: PathBuf::from("logsight-data"),
            checkpoint_path: None,
            max_upload_bytes: 10 * 1024 * 1024,
            questionnaire_path: None,
            catalog_path: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// File values (or defaults), then any `LOGSIGHT_*` variable found by
    /// `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(v) = env("LOGSIGHT_BIND") {
            cfg.bind = v;
        }
        if let Some(v) = env("LOGSIGHT_PORT") {
            cfg.port = v.parse().map_err(|_| ConfigError::Env { var: "LOGSIGHT_PORT", value: v })?;
        }
        if let Some(v) = env("LOGSIGHT_STORE") {
            cfg.store_path = v.into();
        }
        if let Some(v) = env("LOGSIGHT_CHECKPOINT") {
            cfg.checkpoint_path = Some(v.into());
        }
        if let Some(v) = env("LOGSIGHT_MAX_UPLOAD_BYTES") {
            cfg.max_upload_bytes = v
                .parse()
                .map_err(|_| ConfigError::Env { var: "LOGSIGHT_MAX_UPLOAD_BYTES", value: v })?;
        }
        if let Some(v) = env("LOGSIGHT_QUESTIONNAIRE") {
            cfg.questionnaire_path = Some(v.into());
        }
        if let Some(v) = env("LOGSIGHT_CATALOG") {
            cfg.catalog_path = Some(v.into());
        }
        Ok(cfg)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, |k| std::env::var(k).ok())
    }
}
