//! HTTP API over a tension corpus store.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/paragraphs?session=&actor=&order=&limit=&language=&labelled=` | search, `session`/`actor` repeatable |
//! | GET | `/paragraphs/{id}` | one paragraph |
//! | GET | `/paragraphs/{id}/related?k=` | nearest neighbours by cosine similarity |
//! | GET | `/topics` | topic keywords and sizes |
//! | GET | `/active-learning/batch` | pending paragraphs of the open round |
//! | POST | `/annotations` | labels for the open round |
//! | POST | `/train` | start a training job (202) |
//! | GET | `/jobs/{id}` | job status |
//! | GET | `/models/current/metrics` | evaluation of the current model |
//!
//! Errors are `{"error": {"code": "...", "message": "..."}}` with a stable code.

pub mod config;
pub mod error;
mod routes;
pub mod state;
pub mod views;

use axum::http::{header, HeaderValue, Method};
use thiserror::Error;
use tower_http::cors::CorsLayer;

pub use config::ServiceConfig;
pub use error::ApiError;
pub use routes::{router, DEFAULT_LIMIT, MAX_LIMIT};
pub use state::{AppState, Settings};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] tension_core::store::StoreError),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The router with CORS applied for the configured origins.
pub fn app(state: AppState, config: &ServiceConfig) -> Result<axum::Router, ServeError> {
    let router = router(state);
    if config.cors_origins.is_empty() {
        return Ok(router);
    }
    let origins = config
        .cors_origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServeError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Ok(router.layer(cors))
}

/// Opens the store and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let settings = Settings {
        al_batch_size: config.al_batch_size,
        seed: config.seed,
    };
    let store = config.store.clone();
    let state = tokio::task::spawn_blocking(move || AppState::open(&store, settings))
        .await
        .map_err(std::io::Error::other)??;
    let app = app(state, &config)?;
    let addr = config.addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    tracing::info!(%addr, store = %config.store.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
