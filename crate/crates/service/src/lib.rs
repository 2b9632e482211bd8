//! HTTP service serving mechanistic and surrogate scenario runs on one graph.

pub mod api;
pub mod config;
pub mod error;
pub mod routes;
pub mod state;

use std::sync::Arc;

use thiserror::Error;

pub use api::{ChangePointSpec, Engine, InitialSpec, ScenarioRequest, ScenarioResponse, SCHEMA_VERSION};
pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody};
pub use routes::{router, SCHEMA};
pub use state::{graph_id, AppState, LoadedModel};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binds the configured address and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, graph_id = %state.graph_id, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
