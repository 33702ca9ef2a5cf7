//! Endpoint tests against a committed fixture dataset and golden bodies.
//!
//! Set `FACTORSCOPE_UPDATE_GOLDEN=1` to rewrite the fixture and goldens.

mod common;

use std::time::Duration;

use axum::http::StatusCode;
use common::*;
use factorscope_core::embedding::EmbedConfig;

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn golden_bodies_match() {
    let state = load_state(embed_config(), None);
    let bodies = golden_bodies(&state).await;
    assert_eq!(bodies.len(), 7);
    for (name, body) in &bodies {
        check_golden(name, body);
    }
    let done = json(&bodies[6].1);
    assert_eq!(done["state"], "done");
    assert_eq!(done["progress"], 1.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bodies_are_byte_identical_across_runs() {
    let a = load_state(embed_config(), None);
    let b = load_state(embed_config(), None);
    let uri = "/api/clusters";
    let (_, first) = clusters_when_ready(&a, uri).await;
    let (_, second) = clusters_when_ready(&b, uri).await;
    assert!(first == second);
    let (_, again) = get(&a, uri).await;
    assert!(first == again);
    for uri in ["/api/correlations", "/api/portfolios/0000/holdings"] {
        assert!(get(&a, uri).await.1 == get(&b, uri).await.1, "{uri}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cluster_body_shape() {
    let state = load_state(embed_config(), None);
    let (_, body) = clusters_when_ready(&state, "/api/clusters?start=2016-01-09&end=2016-03-06").await;
    let v = json(&body);
    let period = &v["period"];
    assert_eq!(period["requested_start"], "2016-01-09");
    assert_eq!(period["start"], "2016-01-11");
    assert_eq!(period["end"], "2016-03-04");
    assert_eq!(period["snapped"], true);
    let benchmarks: Vec<&str> = v["benchmarks"].as_array().unwrap().iter().map(|b| b["id"].as_str().unwrap()).collect();
    assert_eq!(benchmarks, ["CSI300", "CSI500"]);
    let n_points = v["points"].as_array().unwrap().len();
    let n_excluded = v["excluded"].as_array().unwrap().len();
    assert_eq!(n_points + n_excluded, state.dataset.portfolios.len());
    assert_eq!(v["timeline"].as_array().unwrap().len(), state.dataset.days().len() - 1);
    for p in v["points"].as_array().unwrap() {
        assert!(p["x"].is_f64() && p["y"].is_f64() && p["cumulative_return"].is_f64());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_requests() {
    let state = load_state(embed_config(), None);
    let days = state.dataset.days().to_vec();
    let cases = [
        ("/api/clusters?start=2016-13-01", StatusCode::BAD_REQUEST, "invalid-date"),
        ("/api/clusters?start=2016-02-01&end=2016-01-01", StatusCode::BAD_REQUEST, "invalid-period"),
        ("/api/clusters?start=2016-01-04&end=2016-01-04", StatusCode::BAD_REQUEST, "invalid-period"),
        ("/api/clusters?start=2016-01-09&end=2016-01-10", StatusCode::BAD_REQUEST, "invalid-period"),
        ("/api/correlations?start=2016-01-04&end=2016-01-05", StatusCode::BAD_REQUEST, "invalid-period"),
        ("/api/portfolios/nope/overview", StatusCode::NOT_FOUND, "unknown-portfolio"),
        ("/api/portfolios/nope/holdings", StatusCode::NOT_FOUND, "unknown-portfolio"),
        ("/api/jobs/ffff", StatusCode::NOT_FOUND, "unknown-job"),
    ];
    for (uri, status, code) in cases {
        let (s, body) = get(&state, uri).await;
        assert_eq!(s, status, "{uri}");
        assert_eq!(json(&body)["error"]["code"], code, "{uri}");
    }
    let uri = format!("/api/clusters?start={}&end={}", days[0], days[5]);
    let (s, body) = get(&state, &uri).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"]["code"], "no-portfolios");

    let p = state.dataset.portfolios.iter().find(|p| p.start >= 3).expect("some portfolio starts late");
    let uri = format!("/api/portfolios/{}/overview?start={}&end={}", p.id, days[0], days[p.start - 1]);
    let (s, body) = get(&state, &uri).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"]["code"], "no-overlap");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn oversized_perplexity_fails_the_job() {
    let state = load_state(EmbedConfig { perplexity: 50.0, ..embed_config() }, None);
    let (s, body) = get(&state, "/api/clusters").await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = json(&body)["id"].as_str().unwrap().to_string();
    for _ in 0..600 {
        let (_, view) = get(&state, &format!("/api/jobs/{id}")).await;
        if json(&view)["state"] == "failed" {
            let (s, body) = get(&state, "/api/clusters").await;
            assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
            assert!(json(&body)["error"]["message"].as_str().unwrap().contains("perplexity"));
            return;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job never failed");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn trained_model_persists_in_cache_dir() {
    let dir = tempfile::tempdir().unwrap();
    let state = load_state(embed_config(), Some(dir.path().to_path_buf()));
    assert!(state.cache.pretrained().is_none());
    let (_, first) = clusters_when_ready(&state, "/api/clusters").await;
    let saved: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(saved.len(), 1);

    let restarted = load_state(embed_config(), Some(dir.path().to_path_buf()));
    assert!(restarted.cache.pretrained().is_some());
    let (_, second) = clusters_when_ready(&restarted, "/api/clusters").await;
    assert!(first == second);
}

#[tokio::test]
async fn overview_and_holdings_invariants() {
    let state = load_state(embed_config(), None);
    for p in &state.dataset.portfolios {
        let (s, body) = get(&state, &format!("/api/portfolios/{}/overview", p.id)).await;
        assert_eq!(s, StatusCode::OK);
        let v = json(&body);
        assert_eq!(v["sector_bands"].as_array().unwrap().len(), 7);
        assert_eq!(v["signature"].as_array().unwrap().len(), p.len());
        for day in v["sectors"].as_array().unwrap() {
            let total: f64 = day["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert_eq!(v["cumulative_return"][0]["value"], 0.0);

        let (s, body) = get(&state, &format!("/api/portfolios/{}/holdings", p.id)).await;
        assert_eq!(s, StatusCode::OK);
        let v = json(&body);
        let w_max = v["groups_meta"]["w_max"].as_f64().unwrap();
        assert_eq!(v["days"].as_array().unwrap().len(), p.len());
        for day in v["days"].as_array().unwrap() {
            for h in day["holdings"].as_array().unwrap() {
                let w = h["weight"].as_f64().unwrap();
                let g = h["group"].as_u64().unwrap() as f64;
                assert!(w <= w_max && g < 5.0);
                assert!(g == 4.0 || w < (g + 1.0) * w_max / 5.0);
                assert!(w >= g * w_max / 5.0 - 1e-15);
            }
        }
        let legend = &v["legend"];
        let counted: u64 = [">30%", "10-30%", "<10%"].iter().map(|k| legend[k].as_u64().unwrap()).sum();
        assert_eq!(counted as usize, v["stocks"].as_array().unwrap().len());
    }
}
