use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ftg_core::theory::{out_of_key_pitch_classes, KeySignature};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::generate;
use crate::error::ServiceError;
use crate::request::GenerationRequest;
use crate::store::CheckpointStore;

pub type AppState = Arc<CheckpointStore>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.to_json())).into_response()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRequest {
    id: String,
}

#[derive(Debug, Serialize)]
struct ModelInfo {
    width: usize,
    embed_dim: usize,
    params: usize,
}

async fn health(State(store): State<AppState>) -> Json<serde_json::Value> {
    let mut body = json!({ "status": "ok", "checkpoint": null });
    if let Some((id, ck)) = store.current() {
        let c = ck.model.config();
        body["checkpoint"] = json!(id);
        body["schedule"] = json!(ck.schedule);
        body["model"] =
            json!(ModelInfo { width: c.width, embed_dim: c.embed_dim, params: ck.model.param_count() });
    }
    Json(body)
}

async fn list_checkpoints(State(store): State<AppState>) -> Result<Json<serde_json::Value>, ServiceError> {
    let list = store.list()?;
    let current = store.current().map(|(id, _)| id);
    Ok(Json(json!({ "checkpoints": list, "current": current })))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::bad_request(format!("invalid request: {e}")))
}

async fn load_checkpoint(State(store): State<AppState>, body: Bytes) -> Result<Json<serde_json::Value>, ServiceError> {
    let req: LoadRequest = parse_json(&body)?;
    let s = store.clone();
    let id = req.id.clone();
    tokio::task::spawn_blocking(move || s.load(&id))
        .await
        .map_err(|e| ServiceError::internal(e.to_string()))??;
    Ok(Json(json!({ "checkpoint": req.id })))
}

async fn generate_handler(State(store): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let req: GenerationRequest = parse_json(&body)?;
    let (id, ck) = store.resolve(req.checkpoint.as_deref())?;
    let response = tokio::task::spawn_blocking(move || generate(&ck, Some(id), &req))
        .await
        .map_err(|e| ServiceError::internal(e.to_string()))??;
    Ok(Json(response).into_response())
}

async fn key_rows(Path(symbol): Path<String>) -> Result<Json<serde_json::Value>, ServiceError> {
    let key: KeySignature = symbol.parse()?;
    let rows: Vec<u8> = out_of_key_pitch_classes(key).iter().collect();
    Ok(Json(json!({ "key": key, "out_of_key_pitch_classes": rows })))
}

pub const REQUEST_SCHEMA: &str = include_str!("../schemas/generation_request.v1.json");
pub const RESPONSE_SCHEMA: &str = include_str!("../schemas/generation_response.v1.json");
pub const ERROR_SCHEMA: &str = include_str!("../schemas/error.v1.json");

async fn schema(Path(name): Path<String>) -> Result<Response, ServiceError> {
    let text = match name.as_str() {
        "generation_request" => REQUEST_SCHEMA,
        "generation_response" => RESPONSE_SCHEMA,
        "error" => ERROR_SCHEMA,
        _ => return Err(ServiceError::not_found(format!("unknown schema {name:?}"))),
    };
    Ok(([(axum::http::header::CONTENT_TYPE, "application/schema+json")], text).into_response())
}

fn routes() -> Router<AppState> {
    Router::new()
        .route("/health", get(health))
        .route("/checkpoints", get(list_checkpoints))
        .route("/checkpoints/load", post(load_checkpoint))
        .route("/generate", post(generate_handler))
        .route("/keys/{key}", get(key_rows))
        .route("/schema/{name}", get(schema))
}

/// The HTTP API, mounted under both `/api` and `/api/v1`.
pub fn router(store: AppState) -> Router {
    Router::new().nest("/api/v1", routes()).nest("/api", routes()).with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, store: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}
