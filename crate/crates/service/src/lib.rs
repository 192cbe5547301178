//! Session-based HTTP service: upload a log file, analyze every line, then
//! fetch verdicts, attention tensors and reports per line. Every request is
//! recorded in an append-only interaction log.

pub mod api;
pub mod config;
pub mod questionnaire;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use logsight_core::encoder::Checkpoint;
use logsight_core::pipeline::PipelineConfig;
use logsight_core::reportgen::ResponseCatalog;

pub use api::{router, AppState};
pub use config::ServiceConfig;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("cannot load checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("cannot load questionnaire: {0}")]
    Questionnaire(String),
    #[error("cannot load response catalog: {0}")]
    Catalog(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Server(std::io::Error),
}

/// Open the store and load the model, questionnaire and catalog named in
/// the config. A configured checkpoint that fails to load is an error; an
/// unconfigured one leaves analysis unavailable.
pub fn build_state(cfg: &ServiceConfig) -> Result<AppState, ServeError> {
    let store = Arc::new(store::FsStore::open(&cfg.store_path)?);
    let checkpoint = match &cfg.checkpoint_path {
        Some(p) => Some(Arc::new(Checkpoint::load(p).map_err(|e| ServeError::Checkpoint {
            path: p.display().to_string(),
            reason: e.to_string(),
        })?)),
        None => None,
    };
    let questionnaire = match &cfg.questionnaire_path {
        Some(p) => questionnaire::Questionnaire::load(p).map_err(ServeError::Questionnaire)?,
        None => questionnaire::Questionnaire::default(),
    };
    let catalog = match &cfg.catalog_path {
        Some(p) => ResponseCatalog::load(p).map_err(|e| ServeError::Catalog(e.to_string()))?,
        None => ResponseCatalog::default(),
    };
    let pipeline = PipelineConfig { catalog, ..Default::default() };
    Ok(AppState::new(store, checkpoint, pipeline, questionnaire, cfg.max_upload_bytes)?)
}

/// Serve until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServeError> {
    let state = Arc::new(build_state(&cfg)?);
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    let local: SocketAddr = listener.local_addr().map_err(ServeError::Server)?;
    tracing::info!("listening on {local}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Server)
}
