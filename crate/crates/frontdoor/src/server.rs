//! HTTP veneer over the gateway.
//!
//! `POST /route` accepts a routing request and returns the arm plus the
//! classification result; `GET /health` reports per-arm trace readiness.
//! The same backend set can therefore sit behind a real network boundary
//! without touching the core types.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, HealthReport, RoutingRequest, SessionRecord};

/// Wire response for `POST /route`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteResponse {
    pub arm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<String>,
    pub latency_ms: f64,
    pub cost_usd: f64,
}

impl From<SessionRecord> for RouteResponse {
    fn from(r: SessionRecord) -> Self {
        RouteResponse {
            arm: r.arm.letter().to_string(),
            label: r.predicted_label,
            confidence: r.confidence,
            parse_failure: r.parse_failure,
            latency_ms: r.latency_ms,
            cost_usd: r.cost_usd,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

async fn route(
    State(gateway): State<Arc<Gateway>>,
    Json(req): Json<RoutingRequest>,
) -> Result<Json<RouteResponse>, (StatusCode, Json<ErrorBody>)> {
    match gateway.handle_request(&req) {
        Ok(record) => Ok(Json(record.into())),
        Err(GatewayError::EmptySessionId) => Err((
            StatusCode::BAD_REQUEST,
            Json(ErrorBody {
                error: "session_id must be nonempty".into(),
            }),
        )),
        Err(e) => Err((
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(ErrorBody {
                error: e.to_string(),
            }),
        )),
    }
}

async fn health(State(gateway): State<Arc<Gateway>>) -> Json<HealthReport> {
    Json(gateway.health())
}

/// Builds the service router around a shared gateway.
pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/route", post(route))
        .route("/health", get(health))
        .with_state(gateway)
}
