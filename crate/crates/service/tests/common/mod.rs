//! Fixture, request and golden-file helpers shared by the test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use factorscope_core::embedding::EmbedConfig;
use factorscope_core::io::{write_panel, write_portfolios, PanelFormat, PORTFOLIOS_FILE};
use factorscope_core::synthetic::{generate_synthetic_market, SyntheticConfig};
use factorscope_service::{router, AppState, Dataset, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub mod oracles;

pub const UPDATE_ENV: &str = "FACTORSCOPE_UPDATE_GOLDEN";

pub fn updating() -> bool {
    std::env::var(UPDATE_ENV).is_ok_and(|v| v == "1")
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn fixture_config() -> SyntheticConfig {
    SyntheticConfig {
        n_stocks: 30,
        n_days: 60,
        n_portfolios: 12,
        span_min: 20,
        span_max: 50,
        seed: 11,
        ..SyntheticConfig::default()
    }
}

pub fn write_fixture() {
    let dir = fixture_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let market = generate_synthetic_market(&fixture_config()).unwrap();
    write_panel(&market.panel, &dir, PanelFormat::CsvBundle).unwrap();
    write_portfolios(&dir.join(PORTFOLIOS_FILE), &market.portfolios, &market.panel).unwrap();
}

pub fn embed_config() -> EmbedConfig {
    EmbedConfig { epochs: 4, hidden: 8, perplexity: 3.0, tsne_iterations: 300, ..EmbedConfig::default() }
}

pub fn load_state(embed: EmbedConfig, cache_dir: Option<PathBuf>) -> AppState {
    static FIXTURE: std::sync::Once = std::sync::Once::new();
    FIXTURE.call_once(|| {
        if updating() {
            write_fixture();
        }
    });
    let dataset = Dataset::load(&fixture_dir()).expect("fixture loads; regenerate with FACTORSCOPE_UPDATE_GOLDEN=1");
    AppState::new(dataset, ServiceConfig { embed, cache_dir, ..ServiceConfig::default() }).unwrap()
}

pub async fn get(state: &AppState, uri: &str) -> (StatusCode, Vec<u8>) {
    let res = router(state.clone()).oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

/// Requests clusters until the background job finishes.
pub async fn clusters_when_ready(state: &AppState, uri: &str) -> (Value, Vec<u8>) {
    let (status, first) = get(state, uri).await;
    if status == StatusCode::OK {
        return (Value::Null, first);
    }
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&first));
    let job = json(&first);
    let id = job["id"].as_str().unwrap().to_string();
    for _ in 0..600 {
        let (s, body) = get(state, &format!("/api/jobs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        let view = json(&body);
        match view["state"].as_str().unwrap() {
            "done" => {
                let (s, body) = get(state, uri).await;
                assert_eq!(s, StatusCode::OK);
                return (job, body);
            }
            "failed" => panic!("job failed: {view}"),
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {id} did not finish");
}

/// Compares `bytes` with the named golden file, or rewrites it when updating.
pub fn golden_matches(name: &str, bytes: &[u8]) -> Result<(), String> {
    let path = golden_dir().join(name);
    if updating() {
        std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        return std::fs::write(&path, bytes).map_err(|e| e.to_string());
    }
    let expected = std::fs::read(&path).map_err(|_| format!("missing golden {}", path.display()))?;
    if expected == bytes {
        Ok(())
    } else {
        Err(format!("{name} differs from its golden file"))
    }
}

pub fn check_golden(name: &str, bytes: &[u8]) {
    if let Err(e) = golden_matches(name, bytes) {
        panic!("{e}");
    }
}

/// Every golden body, by file name, fetched from a fresh state.
///
/// The pending job view is normalized: its state and progress race the worker.
pub async fn golden_bodies(state: &AppState) -> Vec<(&'static str, Vec<u8>)> {
    let days = state.dataset.days().to_vec();
    let (start, end) = (days[0], days[days.len() - 1]);
    let id = state.dataset.portfolios[0].id.clone();
    let mut out = Vec::new();
    for (name, uri) in [
        ("correlations_full.json", "/api/correlations".to_string()),
        ("correlations_sub.json", format!("/api/correlations?start={}&end={}", days[10], days[40])),
        ("overview.json", format!("/api/portfolios/{id}/overview")),
        ("holdings.json", format!("/api/portfolios/{id}/holdings")),
    ] {
        let (s, body) = get(state, &uri).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
        out.push((name, body));
    }
    let uri = format!("/api/clusters?start={start}&end={end}");
    let (job, body) = clusters_when_ready(state, &uri).await;
    out.push(("clusters.json", body));

    let mut pending = job;
    assert!(matches!(pending["state"].as_str(), Some("queued" | "running")));
    assert!((0.0..1.0).contains(&pending["progress"].as_f64().unwrap()));
    pending["state"] = Value::from("queued");
    pending["progress"] = Value::from(0.0);
    out.push(("clusters_pending.json", serde_json::to_vec(&pending).unwrap()));

    let (s, done) = get(state, &format!("/api/jobs/{}", pending["id"].as_str().unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    out.push(("job_done.json", done));
    out
}
