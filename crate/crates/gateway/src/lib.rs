//! JSON-over-HTTP front end for the agent runtime.
//!
//! | method | path                      | auth   |
//! |--------|---------------------------|--------|
//! | POST   | `/api/register`           | none   |
//! | POST   | `/api/login`              | none   |
//! | GET    | `/api/records/{file_id}`  | bearer |
//! | PUT    | `/api/records/{file_id}`  | bearer |
//! | POST   | `/api/logout`             | bearer |
//! | GET    | `/api/audit?from=n`       | bearer (admin) |
//! | GET    | `/api/health`             | none   |
//!
//! Every response carries an `x-correlation-id` header. A client may choose
//! the id by sending the same header; otherwise one is generated.

mod error;
mod routes;

use std::future::Future;
use std::io;
use std::sync::Arc;

use axum::Router;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use routes::{router, CORRELATION_HEADER};

use ibac_core::{AgentRuntime, Config, HealthStore, RuntimeConfig, RuntimeHandle, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A store plus the agents serving it.
pub struct Gateway {
    store: Arc<HealthStore>,
    runtime: AgentRuntime,
}

impl Gateway {
    /// Opens the configured data directory and starts the agents. Must be
    /// called inside a tokio runtime.
    pub fn open(config: &Config) -> Result<Self, GatewayError> {
        let store = Arc::new(HealthStore::open(&config.data_dir, config.store_options())?);
        Self::with_store(store, RuntimeConfig::from(config))
    }

    pub fn with_store(store: Arc<HealthStore>, config: RuntimeConfig) -> Result<Self, GatewayError> {
        if config.access_mode.unsafe_allow_all {
            tracing::warn!("policy checks are DISABLED (unsafe_allow_all); never use this outside testing");
        }
        let runtime = AgentRuntime::start(Arc::clone(&store), config)?;
        Ok(Gateway { store, runtime })
    }

    pub fn store(&self) -> &Arc<HealthStore> {
        &self.store
    }

    pub fn handle(&self) -> RuntimeHandle {
        self.runtime.handle()
    }

    pub fn router(&self) -> Router {
        router(self.runtime.handle())
    }

    /// Serves until `shutdown` resolves, then stops the agents.
    pub async fn serve(
        self,
        listener: TcpListener,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> io::Result<()> {
        if let Ok(addr) = listener.local_addr() {
            tracing::info!(%addr, "listening");
        }
        let result = axum::serve(listener, self.router())
            .with_graceful_shutdown(shutdown)
            .await;
        self.runtime.shutdown().await;
        result
    }
}

pub async fn bind(addr: &str) -> Result<TcpListener, GatewayError> {
    TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind {
        addr: addr.to_string(),
        source,
    })
}
