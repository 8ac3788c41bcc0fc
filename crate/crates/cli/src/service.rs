//! Read-only HTTP scoring service over one immutable model.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prognosis_core::cohort::Biomarkers;
use prognosis_core::glm::FittedModel;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::run::sha256_hex;

pub const LDH_MAX: f64 = 10_000.0;
pub const LYMPHOCYTE_MAX: f64 = 100.0;
pub const HS_CRP_MAX: f64 = 1_000.0;
/// Upper bound on sweep length.
pub const MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub ldh: f64,
    pub lymphocyte_pct: f64,
    pub hs_crp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub log_odds: f64,
    pub probability: f64,
    pub predicted_outcome: String,
    pub threshold: f64,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub base: ScoreRequest,
    pub vary: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhatIfPoint {
    pub value: f64,
    pub probability: f64,
}

/// A rejected request: 400 for malformed input, 422 for values outside the
/// accepted clinical ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestError {
    pub status: StatusCode,
    pub field: Option<String>,
    pub message: String,
}

impl RequestError {
    fn malformed(field: Option<&str>, message: impl Into<String>) -> Self {
        RequestError { status: StatusCode::BAD_REQUEST, field: field.map(str::to_string), message: message.into() }
    }

    fn out_of_range(field: &str, value: f64, max: f64) -> Self {
        RequestError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            field: Some(field.to_string()),
            message: format!("{field} = {value} is outside the accepted range [0, {max}]"),
        }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for RequestError {}

impl IntoResponse for RequestError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message, "field": self.field });
        (self.status, Json(body)).into_response()
    }
}

fn range_of(field: &str) -> Option<f64> {
    match field {
        "ldh" => Some(LDH_MAX),
        "lymphocyte_pct" => Some(LYMPHOCYTE_MAX),
        "hs_crp" => Some(HS_CRP_MAX),
        _ => None,
    }
}

fn check(field: &str, value: f64) -> Result<(), RequestError> {
    let max = range_of(field).expect("known biomarker");
    if !(0.0..=max).contains(&value) {
        return Err(RequestError::out_of_range(field, value, max));
    }
    Ok(())
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<Biomarkers, RequestError> {
        check("ldh", self.ldh)?;
        check("lymphocyte_pct", self.lymphocyte_pct)?;
        check("hs_crp", self.hs_crp)?;
        Ok(Biomarkers::new(self.ldh, self.lymphocyte_pct, self.hs_crp).expect("validated ranges"))
    }

    fn with(&self, field: &str, value: f64) -> ScoreRequest {
        let mut r = *self;
        match field {
            "ldh" => r.ldh = value,
            "lymphocyte_pct" => r.lymphocyte_pct = value,
            _ => r.hs_crp = value,
        }
        r
    }
}

/// The loaded model, its file bytes and their hash.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: FittedModel,
    pub document: Vec<u8>,
    pub hash: String,
}

impl LoadedModel {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let text = std::str::from_utf8(&bytes).context("model file is not UTF-8")?;
        let model = FittedModel::from_json(text)?;
        Ok(LoadedModel { hash: sha256_hex(&bytes), model, document: bytes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
        Self::from_bytes(bytes).with_context(|| format!("loading model {}", path.display()))
    }

    pub fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, RequestError> {
        let s = self.model.score(&req.validate()?);
        Ok(ScoreResponse {
            log_odds: s.log_odds,
            probability: s.probability,
            predicted_outcome: s.outcome.name().to_string(),
            threshold: self.model.threshold(),
            model_version: self.hash.clone(),
        })
    }

    pub fn whatif(&self, req: &WhatIfRequest) -> Result<Vec<WhatIfPoint>, RequestError> {
        let field = req.vary.as_str();
        let Some(max) = range_of(field) else {
            return Err(RequestError::malformed(
                Some("vary"),
                format!("unknown biomarker `{field}` (expected ldh, lymphocyte_pct or hs_crp)"),
            ));
        };
        if !(2..=MAX_STEPS).contains(&req.steps) {
            return Err(RequestError::malformed(Some("steps"), format!("steps must lie in [2, {MAX_STEPS}]")));
        }
        if req.min > req.max {
            return Err(RequestError::malformed(Some("min"), format!("min {} exceeds max {}", req.min, req.max)));
        }
        if !(0.0..=max).contains(&req.min) {
            return Err(RequestError::out_of_range("min", req.min, max));
        }
        if !(0.0..=max).contains(&req.max) {
            return Err(RequestError::out_of_range("max", req.max, max));
        }
        req.base.validate()?;
        let last = (req.steps - 1) as f64;
        (0..req.steps)
            .map(|i| {
                let value =
                    if i + 1 == req.steps { req.max } else { req.min + (req.max - req.min) * (i as f64 / last) };
                let s = self.score(&req.base.with(field, value))?;
                Ok(WhatIfPoint { value, probability: s.probability })
            })
            .collect()
    }
}

type Object = serde_json::Map<String, serde_json::Value>;

fn parse_object(body: &[u8], allowed: &[&str]) -> Result<Object, RequestError> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| RequestError::malformed(None, format!("request body is not valid JSON: {e}")))?;
    object(value, None, allowed)
}

fn object(value: serde_json::Value, field: Option<&str>, allowed: &[&str]) -> Result<Object, RequestError> {
    let serde_json::Value::Object(map) = value else {
        let what = field.map_or("request body".to_string(), |f| format!("`{f}`"));
        return Err(RequestError::malformed(field, format!("{what} must be a JSON object")));
    };
    if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(RequestError::malformed(Some(k), format!("unknown field `{k}`")));
    }
    Ok(map)
}

fn number(map: &Object, field: &str) -> Result<f64, RequestError> {
    match map.get(field) {
        None => Err(RequestError::malformed(Some(field), format!("missing field `{field}`"))),
        Some(v) => {
            v.as_f64().ok_or_else(|| RequestError::malformed(Some(field), format!("`{field}` must be a number")))
        }
    }
}

const SCORE_FIELDS: [&str; 3] = ["ldh", "lymphocyte_pct", "hs_crp"];

fn score_request(map: &Object) -> Result<ScoreRequest, RequestError> {
    Ok(ScoreRequest {
        ldh: number(map, "ldh")?,
        lymphocyte_pct: number(map, "lymphocyte_pct")?,
        hs_crp: number(map, "hs_crp")?,
    })
}

impl ScoreRequest {
    pub fn from_json(body: &[u8]) -> Result<Self, RequestError> {
        score_request(&parse_object(body, &SCORE_FIELDS)?)
    }
}

impl WhatIfRequest {
    pub fn from_json(body: &[u8]) -> Result<Self, RequestError> {
        let mut map = parse_object(body, &["base", "vary", "min", "max", "steps"])?;
        let base = map.remove("base").ok_or_else(|| RequestError::malformed(Some("base"), "missing field `base`"))?;
        let base = score_request(&object(base, Some("base"), &SCORE_FIELDS)?)?;
        let vary = match map.get("vary") {
            None => return Err(RequestError::malformed(Some("vary"), "missing field `vary`")),
            Some(v) => v.as_str().ok_or_else(|| RequestError::malformed(Some("vary"), "`vary` must be a string"))?,
        };
        let steps = match map.get("steps") {
            None => return Err(RequestError::malformed(Some("steps"), "missing field `steps`")),
            Some(v) => v
                .as_u64()
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| RequestError::malformed(Some("steps"), "`steps` must be a nonnegative integer"))?,
        };
        Ok(WhatIfRequest { base, vary: vary.to_string(), min: number(&map, "min")?, max: number(&map, "max")?, steps })
    }
}

type Shared = Arc<LoadedModel>;

async fn score(State(m): State<Shared>, body: Bytes) -> Result<Json<ScoreResponse>, RequestError> {
    let req = ScoreRequest::from_json(&body)?;
    m.score(&req).map(Json)
}

async fn whatif(State(m): State<Shared>, body: Bytes) -> Result<Json<Vec<WhatIfPoint>>, RequestError> {
    let req = WhatIfRequest::from_json(&body)?;
    m.whatif(&req).map(Json)
}

async fn model(State(m): State<Shared>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], m.document.clone()).into_response()
}

async fn health(State(m): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": prognosis_core::VERSION,
        "model_hash": m.hash,
        "feature_set": m.model.feature_set().id(),
    }))
}

pub fn router(loaded: LoadedModel, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/score", post(score))
        .route("/whatif", post(whatif))
        .route("/model", get(model))
        .route("/health", get(health))
        .with_state(Arc::new(loaded));
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(model: LoadedModel, bind: &str, ui_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    eprintln!("serving model {} on http://{}", model.hash, listener.local_addr()?);
    axum::serve(listener, router(model, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
