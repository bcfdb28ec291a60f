//! HTTP/JSON API over the colloquy engines.
//!
//! Participant routes live under `/api/topics` and `/api/sessions`; admin
//! routes under `/api/admin` require `Authorization: Bearer <token>`.
//! Every error body is `{"code", "message", "field_path"?}`.

pub mod admin;
pub mod error;
pub mod extract;
pub mod participant;
pub mod state;

use axum::extract::DefaultBodyLimit;
use axum::http::StatusCode;
use axum::Router;
use colloquy_core::fixtures::FixtureDocument;
use colloquy_core::StoreError;

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, ServerConfig, StartupError};

pub fn router(state: AppState) -> Router {
    Router::new()
        .merge(participant::routes())
        .merge(admin::routes(state.clone()))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(extract::MAX_BODY_BYTES))
        .with_state(state)
}

/// Imports a fixture unless a topic with the same name already exists,
/// which is the case when a data directory is reused. Returns whether
/// anything was imported.
pub fn load_fixture(state: &AppState, doc: FixtureDocument) -> Result<bool, StoreError> {
    let catalog = state.store.snapshot();
    if doc.topics.iter().any(|t| catalog.topics.values().any(|existing| existing.name == t.name)) {
        return Ok(false);
    }
    state.store.import(doc)?;
    Ok(true)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
