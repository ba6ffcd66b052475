//! In-process exercise of the HTTP veneer via tower's oneshot.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use tower::util::ServiceExt;

use frontdoor::backends::{fit_latency_model, BackendSpec, DecodeBudget, HostingClass, TraceEntry};
use frontdoor::gateway::{assign_arm, Arm, ArmId, Gateway};
use frontdoor::server::{router, RouteResponse};

fn gateway() -> Arc<Gateway> {
    let mut trace = BTreeMap::new();
    trace.insert(
        "T-001".to_string(),
        TraceEntry {
            case_id: "T-001".into(),
            raw_output: "{\"label\": \"code/simple\", \"confidence\": 0.9}".into(),
        },
    );
    let backend = BackendSpec {
        name: "echo".into(),
        hosting: HostingClass::SelfHosted,
        marginal_cost_usd: 0.0,
        latency: fit_latency_model(100.0, 150.0).unwrap(),
        trace,
        decode: DecodeBudget::default(),
    };
    Arc::new(
        Gateway::new(
            vec![
                Arm { id: ArmId(0), backend: None },
                Arm { id: ArmId(1), backend: Some(backend) },
            ],
            7,
            vec!["T-001".to_string()],
        )
        .unwrap(),
    )
}

fn session_for_arm(target: usize) -> String {
    let mut n = 0;
    loop {
        let id = format!("http-{n}");
        if assign_arm(&id, 2).unwrap() == target {
            return id;
        }
        n += 1;
    }
}

async fn post_route(app: axum::Router, body: serde_json::Value) -> (StatusCode, Vec<u8>) {
    let response = app
        .oneshot(
            Request::post("/route")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
        .unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), 1 << 20)
        .await
        .unwrap();
    (status, bytes.to_vec())
}

#[tokio::test]
async fn route_returns_classification_for_treatment_session() {
    let gw = gateway();
    let (status, body) = post_route(
        router(gw),
        serde_json::json!({
            "session_id": session_for_arm(1),
            "prompt": "write a function",
            "case_id": "T-001",
        }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let resp: RouteResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.arm, "B");
    assert_eq!(resp.label.as_deref(), Some("code/simple"));
    assert_eq!(resp.confidence, Some(0.9));
    assert!(resp.parse_failure.is_none());
    assert!(resp.latency_ms > 0.0);
}

#[tokio::test]
async fn route_control_session_is_pass_through() {
    let gw = gateway();
    let (status, body) = post_route(
        router(gw.clone()),
        serde_json::json!({
            "session_id": session_for_arm(0),
            "prompt": "explain monads",
        }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let resp: RouteResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.arm, "A");
    assert!(resp.label.is_none());
    assert_eq!(resp.latency_ms, 0.0);
    // Each routed request is logged.
    assert_eq!(gw.log_lines().len(), 1);
}

#[tokio::test]
async fn route_rejects_empty_session_id() {
    let (status, _) = post_route(
        router(gateway()),
        serde_json::json!({ "session_id": "", "prompt": "p" }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn health_reports_trace_coverage() {
    let response = router(gateway())
        .oneshot(Request::get("/health").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let bytes = axum::body::to_bytes(response.into_body(), 1 << 20)
        .await
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["arms"].as_array().unwrap().len(), 2);
}
