//! HTTP service around a trained checkpoint: upload reports, read ranked
//! recommendations per requirement, record reviewer feedback.

pub mod api;
pub mod config;
pub mod error;
pub mod state;
pub mod store;

use std::fs;

pub use api::router;
pub use config::ServiceConfig;
pub use error::ServiceError;
pub use state::AppState;

use reportrank_core::checkpoint::Checkpoint;
use reportrank_core::ingest::HeadingMap;

/// Loads the checkpoint and opens the data directory without binding a socket.
pub fn open_state(cfg: &ServiceConfig) -> Result<std::sync::Arc<AppState>, ServiceError> {
    let model = Checkpoint::load(&cfg.checkpoint)?;
    let mut headings = HeadingMap::from_catalog(&model.catalog);
    if let Some(path) = &cfg.headings {
        headings = headings.with_overrides(&fs::read(path)?, &model.catalog)?;
    }
    AppState::open(model, headings, &cfg.data_dir, cfg.max_upload_bytes, cfg.workers)
}

/// Runs until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = open_state(&cfg)?;
    state.resume();
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, model = %state.model().architecture(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
