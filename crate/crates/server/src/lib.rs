//! HTTP/JSON gateway in front of the claim services.
//!
//! Every write goes through the claim workflow, which reaches the services
//! only by resolving them in the registry and exchanging XML envelopes.

pub mod access;
pub mod config;
pub mod http;
pub mod sessions;
pub mod users;

use std::future::Future;
use std::sync::Arc;

use medclaim_core::platform::Platform;
use medclaim_core::store::{FixtureParseError, JournaledClaimStore, PolicyDirectory, StoreError};
use thiserror::Error;
use tokio::net::TcpListener;

pub use config::{config_path, Config, ConfigError};
pub use http::{build_router, ApiError, AppState};
pub use sessions::SessionStore;
pub use users::{Principal, UserDirectory, UsersParseError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    ReadFixture { path: String, source: std::io::Error },
    #[error("policy fixtures: {0}")]
    Fixtures(#[from] FixtureParseError),
    #[error("user fixtures: {0}")]
    Users(#[from] UsersParseError),
    #[error("claim store: {0}")]
    Store(#[from] StoreError),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn read(path: &std::path::Path) -> Result<String, ServeError> {
    std::fs::read_to_string(path).map_err(|source| ServeError::ReadFixture { path: path.display().to_string(), source })
}

/// Builds the platform, user directory and session store a config describes.
pub fn build_state(config: &Config) -> Result<AppState, ServeError> {
    config.check()?;
    let directory = match &config.fixtures.policies {
        Some(p) => PolicyDirectory::from_fixtures(&read(p)?)?,
        None => PolicyDirectory::new(),
    };
    let users = match &config.fixtures.users {
        Some(p) => UserDirectory::parse(&read(p)?)?,
        None => UserDirectory::default(),
    };
    let store = match &config.store.path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            JournaledClaimStore::open(p)?
        }
        None => JournaledClaimStore::in_memory(),
    };
    let platform = Platform::builder(directory).store(Arc::new(store)).monitor(config.monitor.clone()).build();
    let ttl = chrono::Duration::minutes(i64::try_from(config.session.ttl_minutes).unwrap_or(i64::MAX / 60_000));
    Ok(AppState::new(platform, users, SessionStore::new(ttl)))
}

/// Serves `state` on `listener` with the monitor running until `shutdown`
/// resolves.
pub async fn run(
    state: AppState,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
    let monitor = tokio::spawn(Arc::clone(&state.platform.monitor).run(stop_rx));
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    let result = axum::serve(listener, build_router(state)).with_graceful_shutdown(shutdown).await;
    let _ = stop_tx.send(true);
    let _ = monitor.await;
    result.map_err(ServeError::Io)
}

/// Loads everything from `config` and serves until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), ServeError> {
    let state = build_state(&config)?;
    let listener = TcpListener::bind((config.server.host.as_str(), config.server.port)).await?;
    run(state, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
