use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use ftg_core::diffusion::{ScheduleConfig, ToyConfig};
use ftg_core::{CheckpointF64, ToyDenoiserF64};
use ftg_service::api::{ERROR_SCHEMA, REQUEST_SCHEMA, RESPONSE_SCHEMA};
use ftg_service::{generate, router, CheckpointStore, GenerationRequest, ServiceError};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const UI_REQUEST: &str = include_str!("fixtures/ui_session_request.json");

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn schema(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn toy() -> CheckpointF64 {
    CheckpointF64 { schedule: ScheduleConfig::default(), model: ToyDenoiserF64::new(ToyConfig::default()).unwrap() }
}

#[test]
fn request_schema_lists_every_field() {
    let s = schema(REQUEST_SCHEMA);
    let value = serde_json::to_value(GenerationRequest::default()).unwrap();
    assert_eq!(keys(&s["properties"]), keys(&value));
    assert_eq!(keys(&s["properties"]["guidance"]["properties"]), keys(&value["guidance"]));
    assert_eq!(keys(&s["properties"]["sampler"]["properties"]), keys(&value["sampler"]));
}

#[test]
fn response_schema_lists_every_field() {
    let s = schema(RESPONSE_SCHEMA);
    let req: GenerationRequest = serde_json::from_str(UI_REQUEST).unwrap();
    let resp = serde_json::to_value(generate(&toy(), Some("toy".into()), &req).unwrap()).unwrap();
    assert_eq!(keys(&s["properties"]), keys(&resp));
    let required: BTreeSet<String> =
        s["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(required, keys(&resp));
    assert_eq!(keys(&s["properties"]["audit"]["properties"]), keys(&resp["audit"]));
    assert_eq!(keys(&s["properties"]["roll"]["properties"]), keys(&resp["roll"]));
}

#[test]
fn error_schema_codes_match() {
    let s = schema(ERROR_SCHEMA);
    let codes: BTreeSet<String> = s["properties"]["error"]["properties"]["code"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let e = ServiceError::bad_request("x").to_json();
    assert!(codes.contains(e["error"]["code"].as_str().unwrap()));
    assert_eq!(codes.len(), 6);
}

#[test]
fn recorded_ui_request_round_trips() {
    let original: Value = serde_json::from_str(UI_REQUEST).unwrap();
    let req: GenerationRequest = serde_json::from_value(original.clone()).unwrap();
    let back = serde_json::to_value(&req).unwrap();
    // fields the UI left out come back as defaults
    for (k, v) in original.as_object().unwrap() {
        if k == "guidance" || k == "sampler" {
            for (kk, vv) in v.as_object().unwrap() {
                assert_eq!(&back[k][kk], vv, "{k}.{kk}");
            }
        } else {
            assert_eq!(&back[k], v, "{k}");
        }
    }
    let again: GenerationRequest = serde_json::from_value(back).unwrap();
    assert_eq!(again, req);
    let resolved = req.resolve().unwrap();
    assert_eq!(resolved.length, 64);
    assert_eq!(resolved.chords.at(40).unwrap().to_string(), "G7");
    assert!(resolved.warnings.is_empty());
}

#[test]
fn recorded_ui_request_generates_cleanly() {
    let req: GenerationRequest = serde_json::from_str(UI_REQUEST).unwrap();
    let resp = generate(&toy(), None, &req).unwrap();
    assert_eq!(resp.audit.out_of_key_rate, 0.0);
    assert_eq!(resp.audit.rhythm_match_rate, Some(1.0));
    assert_eq!(resp.audit.seed, 42);
    let melody = ftg_core::pianoroll::PianoRoll::try_from(req.melody.clone().unwrap()).unwrap();
    let piece = ftg_core::midi::load_piece(&resp.midi_bytes().unwrap()).unwrap();
    assert_eq!(piece.melody, melody);
}

#[tokio::test]
async fn schemas_are_served() {
    let store = Arc::new(CheckpointStore::new(None));
    for (name, text) in [
        ("generation_request", REQUEST_SCHEMA),
        ("generation_response", RESPONSE_SCHEMA),
        ("error", ERROR_SCHEMA),
    ] {
        let req = Request::get(format!("/api/v1/schema/{name}")).body(Body::empty()).unwrap();
        let resp = router(store.clone()).oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        assert_eq!(body, text.as_bytes());
    }
    let req = Request::get("/api/v1/schema/nope").body(Body::empty()).unwrap();
    assert_eq!(router(store).oneshot(req).await.unwrap().status(), StatusCode::NOT_FOUND);
}
