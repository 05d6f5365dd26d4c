use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::json;

use vecalc_core::samplesize::SampleSizeError;
use vecalc_core::{DocumentError, VeError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApiError {
    /// Malformed or invalid request; `path` locates the offending value.
    Validation { path: String, message: String },
    /// Well-formed request whose result is undefined or unattainable.
    Domain {
        message: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        max_power: Option<f64>,
    },
    /// Simulation larger than the configured budget.
    Budget { message: String, draws: f64, budget: f64 },
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Validation { .. } => StatusCode::BAD_REQUEST,
            ApiError::Domain { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Budget { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        }
    }

    pub fn validation(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ApiError::Validation { path: path.into(), message: message.to_string() }
    }

    /// A document error raised inside the request field `field`.
    pub fn within(field: &str, e: DocumentError) -> Self {
        let path = match e.path.strip_prefix('$') {
            Some(rest) => format!("$.{field}{rest}"),
            None => e.path,
        };
        ApiError::Validation { path, message: e.message }
    }
}

impl From<DocumentError> for ApiError {
    fn from(e: DocumentError) -> Self {
        ApiError::Validation { path: e.path, message: e.message }
    }
}

impl From<VeError> for ApiError {
    fn from(e: VeError) -> Self {
        match e {
            VeError::InvalidGrid(m) => ApiError::validation("$.grid", m),
            VeError::InvalidInput(m) => ApiError::validation("$", m),
            other => ApiError::Domain { message: other.to_string(), max_power: None },
        }
    }
}

impl From<SampleSizeError> for ApiError {
    fn from(e: SampleSizeError) -> Self {
        match e {
            SampleSizeError::InvalidDesign(m) => ApiError::validation("$.scenario.design", m),
            SampleSizeError::Unattainable { max_power } => {
                ApiError::Domain { message: e.to_string(), max_power: Some(max_power) }
            }
            SampleSizeError::Ve(v) => v.into(),
            other => ApiError::Domain { message: other.to_string(), max_power: None },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "schema_version": SCHEMA_VERSION, "error": &self });
        (self.status(), Json(body)).into_response()
    }
}
