//! Stateless HTTP JSON API over `vecalc-core`.
//!
//! Every endpoint takes a request embedding a scenario document and answers
//! with the result plus `schema_version` and `scenario_hash`. Malformed input
//! yields 400 with the JSON path at fault, undefined or unattainable results
//! 422, and simulations over the draw budget 413.

pub mod api;
mod error;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, Method, header};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use tower_http::cors::CorsLayer;

pub use error::ApiError;

/// Largest `n_sim × draws per replicate` accepted by the precision endpoint.
pub const DEFAULT_SIM_BUDGET: f64 = 1e8;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    pub sim_budget: f64,
    pub allowed_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: DEFAULT_BIND.into(), sim_budget: DEFAULT_SIM_BUDGET, allowed_origins: Vec::new() }
    }
}

impl ServiceConfig {
    /// Reads `VECALC_BIND`, `VECALC_SIM_BUDGET` and the comma-separated
    /// `VECALC_ALLOWED_ORIGINS` through `lookup`.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut cfg = Self::default();
        if let Some(bind) = lookup("VECALC_BIND") {
            cfg.bind = bind;
        }
        if let Some(budget) = lookup("VECALC_SIM_BUDGET") {
            cfg.sim_budget = budget
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|b| *b > 0.0)
                .ok_or_else(|| format!("VECALC_SIM_BUDGET must be a positive number, got {budget:?}"))?;
        }
        if let Some(origins) = lookup("VECALC_ALLOWED_ORIGINS") {
            cfg.allowed_origins =
                origins.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        }
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }
}

type Handler = fn(&[u8], &ServiceConfig) -> Result<serde_json::Value, ApiError>;

async fn run(cfg: Arc<ServiceConfig>, body: Bytes, handler: Handler) -> Response {
    let outcome = tokio::task::spawn_blocking(move || handler(&body, &cfg)).await;
    match outcome {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(join) => {
            let e = ApiError::Domain { message: format!("computation aborted: {join}"), max_power: None };
            (axum::http::StatusCode::INTERNAL_SERVER_ERROR, e.into_response()).into_response()
        }
    }
}

macro_rules! endpoint {
    ($name:ident, $f:expr) => {
        async fn $name(State(cfg): State<Arc<ServiceConfig>>, body: Bytes) -> Response {
            run(cfg, body, $f).await
        }
    };
}

endpoint!(ve_point, |b, _| api::point(b));
endpoint!(ve_curve, |b, _| api::curve(b));
endpoint!(ve_limits, |b, _| api::limits(b));
endpoint!(tnd_counts, |b, _| api::tnd(b));
endpoint!(mdve, |b, _| api::mdve(b));
endpoint!(precision, |b, cfg| api::precision(b, cfg.sim_budget));

pub fn router(config: ServiceConfig) -> Router {
    let cors = (!config.allowed_origins.is_empty()).then(|| {
        let origins: Vec<HeaderValue> =
            config.allowed_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        CorsLayer::new()
            .allow_origin(origins)
            .allow_methods([Method::POST, Method::OPTIONS])
            .allow_headers([header::CONTENT_TYPE])
    });
    let app = Router::new()
        .route("/api/v1/ve/point", post(ve_point))
        .route("/api/v1/ve/curve", post(ve_curve))
        .route("/api/v1/ve/limits", post(ve_limits))
        .route("/api/v1/tnd/expected-counts", post(tnd_counts))
        .route("/api/v1/samplesize/mdve", post(mdve))
        .route("/api/v1/samplesize/precision", post(precision))
        .with_state(Arc::new(config));
    match cors {
        Some(layer) => app.layer(layer),
        None => app,
    }
}
