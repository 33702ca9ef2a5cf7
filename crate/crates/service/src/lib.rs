//! HTTP API serving clusters, factor correlations and portfolio detail.
//!
//! All endpoints read one immutable [`Dataset`] snapshot. Embeddings are
//! computed in the background: the first request for a period answers
//! `202` with a job, later requests answer `200` from the cache.

pub mod api;
pub mod config;
pub mod dataset;
pub mod jobs;
pub mod views;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use factorscope_core::embedding::{load_checkpoint, EmbedConfig, EmbeddingCache};
use factorscope_core::DataError;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use api::router;
pub use config::ServiceConfig;
pub use dataset::Dataset;
pub use jobs::{Job, JobState, JobView, Jobs};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] factorscope_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// An error answer: status plus a JSON `{"error": {"code", "message"}}` body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&ErrorBody { error: ErrorDetail { code: self.code, message: &self.message } })
            .expect("error body serializes");
        (self.status, [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

pub struct AppInner {
    pub dataset: Dataset,
    pub cache: EmbeddingCache,
    pub jobs: Jobs,
    pub config: ServiceConfig,
    bodies: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState(Arc<AppInner>);

impl std::ops::Deref for AppState {
    type Target = AppInner;
    fn deref(&self) -> &AppInner {
        &self.0
    }
}

impl AppState {
    /// Wraps `dataset`, loading a pretrained model from the configured
    /// checkpoint or from a model earlier saved in the cache directory.
    pub fn new(dataset: Dataset, config: ServiceConfig) -> Result<Self, ServiceError> {
        let pretrained = match (&config.checkpoint, model_path(&config, &dataset.fingerprint)) {
            (Some(path), _) => Some(path.clone()),
            (None, Some(path)) if path.exists() => Some(path),
            _ => None,
        };
        let cache = match pretrained {
            Some(path) => {
                let params = load_checkpoint(&path).map_err(factorscope_core::Error::from)?;
                tracing::info!(path = %path.display(), "loaded pretrained model");
                EmbeddingCache::with_pretrained(params)
            }
            None => EmbeddingCache::new(),
        };
        Ok(Self(Arc::new(AppInner { dataset, cache, jobs: Jobs::default(), config, bodies: Mutex::default() })))
    }

    /// Serialized body under `key`, built once.
    pub(crate) fn body(&self, key: String, build: impl FnOnce() -> Result<Vec<u8>, ApiError>) -> Result<Arc<Vec<u8>>, ApiError> {
        if let Some(b) = self.bodies.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
            return Ok(b.clone());
        }
        let b = Arc::new(build()?);
        self.bodies.lock().unwrap_or_else(|p| p.into_inner()).insert(key, b.clone());
        Ok(b)
    }
}

pub(crate) fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Where a globally trained model for this dataset and configuration is persisted.
pub fn model_path(config: &ServiceConfig, fingerprint: &str) -> Option<PathBuf> {
    let dir = config.cache_dir.as_ref()?;
    let e: &EmbedConfig = &config.embed;
    let key = format!("{}|{}|{}|{}|{}", e.epochs, e.lr, e.hidden, e.batch_size, e.seed);
    Some(dir.join(format!("model-{}-{}.json", &fingerprint[..16], &sha256_hex(&key)[..8])))
}

/// Loads the dataset named by `config` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let dataset = Dataset::load(&config.data_dir)?;
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Io { path: PathBuf::from(&addr), source })?;
    let state = AppState::new(dataset, config)?;
    tracing::info!(%addr, "listening");
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| ServiceError::Io { path: PathBuf::from(addr), source })
}
