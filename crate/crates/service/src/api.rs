//! Routes and handlers.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::NaiveDate;
use factorscope_core::embedding::{
    embed_pipeline, global_model, result_key, save_checkpoint, EmbedInputs, EmbeddingError, EpochReport,
};
use serde::{Deserialize, Serialize};

use crate::jobs::Job;
use crate::views::{self, PeriodEcho};
use crate::{model_path, sha256_hex, ApiError, AppState};

/// Shortest period, in trading days, each endpoint accepts.
pub const MIN_CLUSTER_DAYS: usize = 2;
pub const MIN_CORRELATION_DAYS: usize = 3;

/// Share of job progress reserved for training; encoding and layout take the rest.
const TRAIN_PROGRESS: f64 = 0.9;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/clusters", get(clusters))
        .route("/api/correlations", get(correlations))
        .route("/api/portfolios/{id}/overview", get(overview))
        .route("/api/portfolios/{id}/holdings", get(holdings))
        .route("/api/jobs/{id}", get(job))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let t0 = Instant::now();
    let res = next.run(req).await;
    tracing::info!(%method, %uri, status = res.status().as_u16(), ms = t0.elapsed().as_millis() as u64, "request");
    res
}

#[derive(Debug, Default, Deserialize)]
pub struct PeriodQuery {
    pub start: Option<String>,
    pub end: Option<String>,
}

fn parse_date(name: &str, value: Option<&str>) -> Result<Option<NaiveDate>, ApiError> {
    value
        .map(|v| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .map_err(|_| ApiError::bad_request("invalid-date", format!("{name}={v} is not a YYYY-MM-DD date")))
        })
        .transpose()
}

fn period(state: &AppState, q: &PeriodQuery, min_days: usize) -> Result<PeriodEcho, ApiError> {
    let start = parse_date("start", q.start.as_deref())?;
    let end = parse_date("end", q.end.as_deref())?;
    views::resolve_period(&state.dataset, start, end, min_days)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, ApiError> {
    serde_json::to_vec(value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

fn json_response(status: StatusCode, body: Arc<Vec<u8>>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], Body::from(body.as_ref().clone())).into_response()
}

fn query_error(e: axum::extract::rejection::QueryRejection) -> ApiError {
    ApiError::bad_request("invalid-query", e.body_text())
}

type PeriodParams = Result<Query<PeriodQuery>, axum::extract::rejection::QueryRejection>;

async fn clusters(State(state): State<AppState>, q: PeriodParams) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(query_error)?;
    let period = period(&state, &q, MIN_CLUSTER_DAYS)?;
    let (lo, hi) = (period.lo, period.hi);
    if !state.dataset.has_embeddable(lo, hi) {
        return Err(ApiError::not_found(
            "no-portfolios",
            format!("no portfolio is active for 20 days between {} and {}", period.start, period.end),
        ));
    }
    let key = result_key(&state.dataset.fingerprint, (lo, hi), &state.config.embed);
    if let Some(result) = state.cache.cached_result(&key) {
        let body = state.body(format!("clusters|{lo}|{hi}|{:?}|{:?}", period.requested_start, period.requested_end), || {
            json_bytes(&views::clusters_body(&state.dataset, period.clone(), &result))
        })?;
        return Ok(json_response(StatusCode::OK, body));
    }
    let job_id = sha256_hex(&key)[..16].to_string();
    let (job, created) =
        state.jobs.get_or_create(&job_id, || format!("/api/clusters?start={}&end={}", period.start, period.end));
    if created {
        let state = state.clone();
        let job = job.clone();
        tokio::task::spawn_blocking(move || run_embedding(&state, &job, (lo, hi)));
    }
    if let Some((status, message)) = job.failure() {
        let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return Err(ApiError::new(status, "embedding-failed", message));
    }
    Ok(json_response(StatusCode::ACCEPTED, Arc::new(json_bytes(&job.view())?)))
}

fn failure_status(e: &EmbeddingError) -> u16 {
    match e {
        EmbeddingError::PerplexityTooLarge { .. }
        | EmbeddingError::TooFewPoints(_)
        | EmbeddingError::DegenerateInput(_)
        | EmbeddingError::EmptySelection { .. } => 422,
        _ => 500,
    }
}

/// Trains or reuses the model, then embeds the period; reports into `job`.
fn run_embedding(state: &AppState, job: &Job, period: (usize, usize)) {
    job.start();
    let ds = &state.dataset;
    let cfg = &state.config.embed;
    let sources = ds.sources();
    let frozen = ds.benchmark_sources();
    let inputs = EmbedInputs { sources: &sources, frozen: &frozen, full_range: ds.full_range(), fingerprint: &ds.fingerprint };
    let mut observer = |r: EpochReport| {
        job.advance(TRAIN_PROGRESS * r.epoch as f64 / r.epochs.max(1) as f64);
        true
    };
    let outcome = (|| {
        if !cfg.retrain {
            let (model, reused) = global_model(inputs, cfg, &state.cache, &mut observer)?;
            if let (false, Some(path)) = (reused, model_path(&state.config, &ds.fingerprint)) {
                if let Some(dir) = path.parent() {
                    let _ = std::fs::create_dir_all(dir);
                }
                match save_checkpoint(&path, &model) {
                    Ok(()) => tracing::info!(path = %path.display(), "saved model"),
                    Err(e) => tracing::warn!(error = %e, "model not saved"),
                }
            }
        }
        job.advance(TRAIN_PROGRESS);
        embed_pipeline(inputs, period, cfg, &state.cache, &mut observer)
    })();
    match outcome {
        Ok(_) => job.finish(),
        Err(e) => {
            tracing::warn!(job = %job.id, error = %e, "embedding failed");
            job.fail(failure_status(&e), e.to_string());
        }
    }
}

async fn correlations(State(state): State<AppState>, q: PeriodParams) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(query_error)?;
    let period = period(&state, &q, MIN_CORRELATION_DAYS)?;
    let key = format!("correlations|{}|{}|{:?}|{:?}", period.lo, period.hi, period.requested_start, period.requested_end);
    let body = state.body(key, || json_bytes(&views::correlations_body(&state.dataset, period)?))?;
    Ok(json_response(StatusCode::OK, body))
}

async fn overview(State(state): State<AppState>, Path(id): Path<String>, q: PeriodParams) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(query_error)?;
    if state.dataset.portfolio(&id).is_none() {
        return Err(ApiError::not_found("unknown-portfolio", format!("no portfolio {id}")));
    }
    let period = period(&state, &q, 1)?;
    let body = views::overview_body(&state.dataset, &id, period)?;
    Ok(json_response(StatusCode::OK, Arc::new(json_bytes(&body)?)))
}

async fn holdings(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = state.body(format!("holdings|{id}"), || json_bytes(&views::holdings_body(&state.dataset, &id)?))?;
    Ok(json_response(StatusCode::OK, body))
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("unknown-job", format!("no job {id}")))?;
    Ok(json_response(StatusCode::OK, Arc::new(json_bytes(&job.view())?)))
}
