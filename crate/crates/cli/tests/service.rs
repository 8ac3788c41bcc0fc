use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use prognosis_cli::service::{router, LoadedModel};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/published_model.json")
}

fn app() -> Router {
    router(LoadedModel::load(&fixture_path()).unwrap(), None)
}

async fn call(app: Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(path: &str, body: &str) -> (StatusCode, Value) {
    let req =
        Request::post(path).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    let (status, bytes) = call(app(), req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn score(ldh: f64, lymph: f64, crp: f64) -> Value {
    let (status, v) = post("/score", &json!({"ldh": ldh, "lymphocyte_pct": lymph, "hs_crp": crp}).to_string()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

#[tokio::test]
async fn score_examples() {
    let v = score(600.0, 5.0, 100.0).await;
    assert!((v["log_odds"].as_f64().unwrap() - 3.8965).abs() < 1e-9);
    assert!((v["probability"].as_f64().unwrap() - 1.0 / (1.0 + (-3.8965f64).exp())).abs() < 1e-9);
    assert_eq!(v["predicted_outcome"], "death");
    assert_eq!(v["threshold"], 0.8);

    let v = score(0.0, 0.0, 0.0).await;
    let p = v["probability"].as_f64().unwrap();
    assert!((p - 1.0 / (1.0 + 4.976f64.exp())).abs() <= 1e-9 * p);
    assert_eq!(v["predicted_outcome"], "survival");

    let v = score(200.0, 30.0, 5.0).await;
    assert!((v["probability"].as_f64().unwrap() - 2.6e-4).abs() < 1e-5);
    assert_eq!(v["model_version"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn malformed_bodies_are_400_with_field() {
    for (body, field) in [
        (r#"{"ldh": 600, "lymphocyte_pct": 5}"#, Some("hs_crp")),
        (r#"{"ldh": "high", "lymphocyte_pct": 5, "hs_crp": 1}"#, Some("ldh")),
        (r#"{"ldh": 1, "lymphocyte_pct": 5, "hs_crp": 1, "age": 40}"#, Some("age")),
        (r#"{"ldh": 1,"#, None),
        ("[1, 2, 3]", None),
    ] {
        let (status, v) = post("/score", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
        assert_eq!(v["field"].as_str(), field, "{body}");
    }
}

#[tokio::test]
async fn out_of_range_is_422() {
    for (body, field) in [
        (r#"{"ldh": 10001, "lymphocyte_pct": 5, "hs_crp": 1}"#, "ldh"),
        (r#"{"ldh": 100, "lymphocyte_pct": 100.5, "hs_crp": 1}"#, "lymphocyte_pct"),
        (r#"{"ldh": 100, "lymphocyte_pct": 5, "hs_crp": -1}"#, "hs_crp"),
        (r#"{"ldh": 100, "lymphocyte_pct": 5, "hs_crp": 1000.01}"#, "hs_crp"),
    ] {
        let (status, v) = post("/score", body).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(v["field"], field);
    }
    // range corners are accepted; the ldh x hs-crp term dominates here
    let v = score(10_000.0, 100.0, 1_000.0).await;
    assert_eq!(v["predicted_outcome"], "survival");
}

fn sweep_body(vary: &str, min: f64, max: f64, steps: usize) -> String {
    json!({"base": {"ldh": 200, "lymphocyte_pct": 30, "hs_crp": 5}, "vary": vary, "min": min, "max": max, "steps": steps})
        .to_string()
}

#[tokio::test]
async fn whatif_degenerate_range() {
    let (status, v) = post("/whatif", &sweep_body("ldh", 0.0, 0.0, 2)).await;
    assert_eq!(status, StatusCode::OK);
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0], pts[1]);
}

#[tokio::test]
async fn lymphocyte_sweep_decreases_and_matches_score() {
    let (status, v) = post("/whatif", &sweep_body("lymphocyte_pct", 0.0, 100.0, 51)).await;
    assert_eq!(status, StatusCode::OK);
    let pts = v.as_array().unwrap();
    let probs: Vec<f64> = pts.iter().map(|p| p["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[1] < w[0]));
    let values: Vec<f64> = pts.iter().map(|p| p["value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(values[50], 100.0);
    for i in [0, 50] {
        let single = score(200.0, values[i], 5.0).await["probability"].as_f64().unwrap();
        assert!((single - probs[i]).abs() <= 1e-12);
    }
}

#[tokio::test]
async fn whatif_rejections() {
    let (s, v) = post("/whatif", &sweep_body("age", 0.0, 1.0, 3)).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::BAD_REQUEST, Some("vary")));
    let (s, _) = post("/whatif", &sweep_body("ldh", 0.0, 1.0, 1)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post("/whatif", &sweep_body("ldh", 5.0, 1.0, 3)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post("/whatif", &sweep_body("lymphocyte_pct", 0.0, 120.0, 3)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post("/whatif", r#"{"vary": "ldh", "min": 0, "max": 1, "steps": 2}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn model_and_health() {
    let bytes = std::fs::read(fixture_path()).unwrap();
    let (status, body) = call(app(), Request::get("/model").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, bytes);
    let doc: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc["coefficients"], json!([-4.976, 1.440e-2, -3.053e-1, 4.378e-2, 4.766e-4, -6.748e-5]));

    let (status, body) = call(app(), Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let h: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(h["model_hash"], prognosis_cli::run::sha256_hex(&bytes));
    assert_eq!(h["version"], prognosis_core::VERSION);
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let app = app();
    let body = json!({"ldh": 431.5, "lymphocyte_pct": 11.2, "hs_crp": 37.25}).to_string();
    let tasks: Vec<_> = (0..32)
        .map(|_| {
            let app = app.clone();
            let body = body.clone();
            tokio::spawn(async move { call(app, Request::post("/score").body(Body::from(body)).unwrap()).await })
        })
        .collect();
    let mut outs = Vec::new();
    for t in tasks {
        outs.push(t.await.unwrap());
    }
    assert!(outs.iter().all(|o| o == &outs[0] && o.0 == StatusCode::OK));
}

#[tokio::test]
async fn static_ui_is_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>risk explorer</html>").unwrap();
    let app = router(LoadedModel::load(&fixture_path()).unwrap(), Some(dir.path().to_path_buf()));
    let (status, body) = call(app.clone(), Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>risk explorer</html>");
    let (status, _) = call(app, Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
}
