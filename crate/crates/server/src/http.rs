//! HTTP transport: `POST /rpc` for JSON-RPC and
//! `GET /preview/<session>/<label>/` serving a version's document for
//! sandboxed iframes.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fediff_core::store::{SessionId, StoreError};
use tracing::info;

use crate::rpc::RpcService;

/// Served with every preview: generated pages run in an opaque origin and
/// cannot reach the UI's origin, cookies or storage.
pub const PREVIEW_CSP: &str = "sandbox allow-scripts";

pub fn router(service: RpcService) -> Router {
    Router::new()
        .route("/rpc", post(rpc))
        .route("/preview/{session}/{label}", get(preview))
        .route("/preview/{session}/{label}/", get(preview))
        .route("/health", get(|| async { "ok" }))
        .with_state(service)
}

async fn rpc(State(service): State<RpcService>, body: Bytes) -> Response {
    match service.handle_bytes(&body).await {
        Some(reply) => Json(reply).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn preview(State(service): State<RpcService>, Path((session, label)): Path<(String, String)>) -> Response {
    let Ok(id) = session.parse::<SessionId>() else {
        return (StatusCode::NOT_FOUND, "unknown session").into_response();
    };
    match service.engine().store().artifact(&id, &label) {
        Ok(artifact) => {
            let mut response = artifact.html().to_string().into_response();
            let headers = response.headers_mut();
            headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/html; charset=utf-8"));
            headers.insert(header::CONTENT_SECURITY_POLICY, HeaderValue::from_static(PREVIEW_CSP));
            headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
            headers.insert(header::X_CONTENT_TYPE_OPTIONS, HeaderValue::from_static("nosniff"));
            response
        }
        Err(StoreError::UnknownSession(_) | StoreError::UnknownVersion(_)) => {
            (StatusCode::NOT_FOUND, "unknown version").into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Bind `addr` and serve until the process is interrupted.
pub async fn serve(service: RpcService, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
