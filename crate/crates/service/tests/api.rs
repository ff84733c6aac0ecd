use std::path::Path;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stocklink::catalog::Inventory;
use stocklink::mechanism::Topology;
use stocklink::runs::{self, Manifest};
use stocklink::search::{self, Silent};
use stocklink_service::{router, ServiceConfig};
use tower::ServiceExt;

fn app(workdir: &Path, max_active: usize) -> Router {
    let mut cfg = ServiceConfig::new(Inventory::builtin("reduced").unwrap(), workdir.to_path_buf());
    cfg.max_active = max_active;
    cfg.event_interval = Duration::from_millis(20);
    router(cfg)
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn target() -> Value {
    let inv = Inventory::builtin("reduced").unwrap();
    let topo = std::sync::Arc::new(Topology::four_bar());
    let (_, _, curve) = search::self_seeded_target(&topo, &inv, 1, 10_000).unwrap();
    serde_json::to_value(curve).unwrap()
}

async fn submit(app: &Router, body: Value) -> u64 {
    let (status, v) = send_json(app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    v["id"].as_u64().unwrap()
}

async fn wait_terminal(app: &Router, id: u64) -> Value {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let (_, v) = send_json(app, "GET", &format!("/api/jobs/{id}"), None).await;
        if ["done", "failed", "cancelled"].contains(&v["state"].as_str().unwrap()) {
            return v;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

/// `(event name, data)` pairs of a finished SSE body.
fn parse_sse(text: &str) -> Vec<(String, Value)> {
    text.split("\n\n")
        .filter_map(|block| {
            let mut name = None;
            let mut data = None;
            for line in block.lines() {
                if let Some(n) = line.strip_prefix("event:") {
                    name = Some(n.trim().to_string());
                } else if let Some(d) = line.strip_prefix("data:") {
                    data = Some(serde_json::from_str(d.trim()).unwrap());
                }
            }
            Some((name?, data?))
        })
        .collect()
}

#[tokio::test]
async fn parts_lists_the_catalog_with_ghg() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let (status, v) = send_json(&app, "GET", "/api/parts", None).await;
    assert_eq!(status, StatusCode::OK);
    let parts = v["parts"].as_array().unwrap();
    assert_eq!(parts.len(), 5);
    for p in parts {
        let expected = p["hole_count"].as_f64().unwrap() * 0.83;
        assert!((p["ghg"].as_f64().unwrap() - expected).abs() < 1e-12);
    }
    let (status, _) = send(&app, "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&app, "GET", "/api/jobs/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let one_point = json!({"kind": "match", "target": {"points": [[0, 0]]}, "budget": 10});
    let (status, v) = send_json(&app, "POST", "/api/jobs", Some(one_point)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "DegenerateCurve");

    let repeated = json!({"kind": "match", "target": {"points": [[1, 1], [1, 1], [1, 1]]}, "budget": 10});
    let (status, v) = send_json(&app, "POST", "/api/jobs", Some(repeated)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "DegenerateCurve");

    let (status, _) = send(&app, "POST", "/api/jobs", Some(json!({"kind": "paint"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, "POST", "/api/jobs", Some(json!({"kind": "match", "target": target()}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "budget is required");
    let bad_counts = json!({"kind": "match", "target": target(), "budget": 5, "inventory": [1, 2]});
    let (status, v) = send_json(&app, "POST", "/api/jobs", Some(bad_counts)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "InvalidInventory");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn match_job_streams_monotone_progress_and_matches_the_cli_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let id = submit(&app, json!({"kind": "match", "target": target(), "solver": "ga", "budget": 1200, "seed": 5})).await;
    let (status, body) = send(&app, "GET", &format!("/api/jobs/{id}/events"), None).await;
    assert_eq!(status, StatusCode::OK);
    let events = parse_sse(&String::from_utf8(body).unwrap());
    let (last_name, last) = events.last().unwrap();
    assert_eq!(last_name, "done");
    let bests: Vec<f64> = events.iter().filter_map(|(_, d)| d["best_f_kin"].as_f64()).collect();
    assert!(bests.windows(2).all(|w| w[1] <= w[0]), "{bests:?}");
    for (_, d) in &events {
        if let (Some(e), Some(b)) = (d["evaluations"].as_u64(), d["budget"].as_u64()) {
            assert!(e <= b);
        }
    }

    let job_dir = dir.path().join("jobs").join(id.to_string());
    let trace = std::fs::read_to_string(job_dir.join(runs::TRACE_FILE)).unwrap();
    let final_line: Value = serde_json::from_str(trace.lines().last().unwrap()).unwrap();
    assert_eq!(last["best_f_kin"], final_line["best_f_kin"]);
    assert_eq!(trace.lines().count(), 1200);

    // the same manifest run directly gives the same files
    let manifest = Manifest::load(&job_dir.join(runs::MANIFEST_FILE)).unwrap();
    let again = tempfile::tempdir().unwrap();
    let report = runs::execute(&manifest, again.path(), &Silent).unwrap();
    for f in &report.files {
        assert_eq!(std::fs::read(job_dir.join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap(), "{f}");
    }
    let status = wait_terminal(&app, id).await;
    assert_eq!(status["result"]["files"], json!(report.files));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn status_probes_stay_fast_and_cancellation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let id = submit(&app, json!({"kind": "match", "target": target(), "solver": "random", "budget": 1_000_000})).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let mut slowest = Duration::ZERO;
    for _ in 0..10 {
        let t = Instant::now();
        let (status, v) = send_json(&app, "GET", &format!("/api/jobs/{id}"), None).await;
        slowest = slowest.max(t.elapsed());
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["state"], "running");
    }
    assert!(slowest < Duration::from_millis(100), "status probe took {slowest:?}");

    let (status, _) = send(&app, "DELETE", &format!("/api/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, body) = send(&app, "GET", &format!("/api/jobs/{id}/events"), None).await;
    let events = parse_sse(&String::from_utf8(body).unwrap());
    assert_eq!(events.last().unwrap().0, "cancelled");
    assert_eq!(wait_terminal(&app, id).await["state"], "cancelled");
    // terminal states stay put
    send(&app, "DELETE", &format!("/api/jobs/{id}"), None).await;
    assert_eq!(wait_terminal(&app, id).await["state"], "cancelled");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn submissions_beyond_capacity_get_409() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let body = json!({"kind": "match", "target": target(), "solver": "random", "budget": 1_000_000});
    let id = submit(&app, body.clone()).await;
    let (status, v) = send_json(&app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "OverCapacity");
    send(&app, "DELETE", &format!("/api/jobs/{id}"), None).await;
    wait_terminal(&app, id).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tradeoff_job_quantizes_ghg_on_missing_parts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    // no 14-hole beam and no U part in stock; extra units of stocked parts also count
    let body = json!({"kind": "tradeoff", "target": target(), "budget": 600, "inventory": [2, 1, 1, 0, 0], "seed": 2});
    let id = submit(&app, body).await;
    let status = wait_terminal(&app, id).await;
    assert_eq!(status["state"], "done", "{status}");
    let levels = status["result"]["summary"]["ghg_levels"].as_array().unwrap().clone();
    assert!(levels.len() > 1);
    // four parts at most, each costing its hole count times 0.83
    let holes = [5.0, 9.0, 7.0, 14.0, 15.0];
    let mut sums = vec![0.0];
    for _ in 0..4 {
        let next: Vec<f64> = sums.iter().flat_map(|s| holes.iter().map(move |h| s + h)).collect();
        sums.extend(next);
    }
    for level in levels {
        let g = level.as_f64().unwrap();
        assert!(sums.iter().any(|s| (s * 0.83 - g).abs() < 1e-9), "{g} is not a sum of part GHG values");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn archive_job_and_its_stats() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let id = submit(&app, json!({"kind": "archive", "mechanisms": 20, "dyads": 1, "seed": 3})).await;
    let (status, _) = send(&app, "GET", "/api/archives/999/stats", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(wait_terminal(&app, id).await["state"], "done");
    let (status, stats) = send_json(&app, "GET", &format!("/api/archives/{id}/stats"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["mechanisms"], 20);
    let pct = stats["pct_closed"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&pct));
}

#[tokio::test]
async fn frames_for_moving_and_locked_mechanisms() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let moving = json!({"mechanism": {"template": "four_bar", "p": [1, 0, 4, 0], "h": [0, 4, 0, 2, 0, 3, 0, 3]}});
    let (status, v) = send_json(&app, "POST", "/api/frames", Some(moving)).await;
    assert_eq!(status, StatusCode::OK);
    let frames = v["frames"].as_array().unwrap();
    assert!(!frames.is_empty() && frames.len() <= 360);
    assert_eq!(frames[0]["poses"].as_array().unwrap().len(), 4);
    assert!(v["warning"].is_null());
    let traj = v["trajectories"].as_array().unwrap();
    assert!(traj.iter().all(|t| t["raw"].as_array().unwrap().len() == frames.len()));

    let locked = json!({"mechanism": {"template": "four_bar", "p": [3, 0, 0, 0], "h": [0, 13, 0, 1, 0, 1, 0, 1]}});
    let (status, v) = send_json(&app, "POST", "/api/frames", Some(locked)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["frames"].as_array().unwrap().len(), 0);
    assert_eq!(v["range"]["span"], 0.0);
    assert!(v["warning"].is_string());

    let bad = json!({"mechanism": {"template": "four_bar", "p": [1, 0], "h": []}});
    let (status, v) = send_json(&app, "POST", "/api/frames", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "InvalidMechanism");
    let out_of_range = json!({"mechanism": {"template": "four_bar", "p": [1, 0, 4, 0], "h": [0, 40, 0, 2, 0, 3, 0, 3]}});
    let (status, _) = send(&app, "POST", "/api/frames", Some(out_of_range)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
