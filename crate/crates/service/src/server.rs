use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::thread::JoinHandle;

use thiserror::Error;
use tokio::sync::oneshot;
use url::Url;

use crate::api::{router, AppState};
use crate::config::ServiceConfig;
use crate::store::{JobStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn bind(config: &ServiceConfig) -> Result<std::net::TcpListener, ServiceError> {
    let addr = config.addr();
    let listener = std::net::TcpListener::bind(addr).map_err(|source| ServiceError::Bind { addr, source })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Runs the service until `shutdown` resolves. Calls `on_bound` with the
/// listening address once the socket is open.
pub async fn serve(
    config: ServiceConfig,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let store = JobStore::open(&config.data_dir)?;
    let listener = tokio::net::TcpListener::from_std(bind(&config)?)?;
    on_bound(listener.local_addr()?);
    let app = router(AppState::new(store, config));
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// A service running on a background thread; stopped when dropped.
///
/// Dropping waits for in-flight jobs so their results reach the log.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://host:port`
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Root of the versioned API, also usable as a remote backend URL.
    pub fn api_url(&self) -> Url {
        Url::parse(&format!("{}/api/v1", self.base_url())).expect("socket address forms a URL")
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Starts the service on its own runtime thread. Store and socket errors
/// are reported before this returns.
pub fn spawn(config: ServiceConfig) -> Result<ServerHandle, ServiceError> {
    let store = JobStore::open(&config.data_dir)?;
    let listener = bind(&config)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .thread_name("topostudio-service")
        .build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("topostudio-service".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!("listener: {e}");
                        return;
                    }
                };
                let app = router(AppState::new(store, config));
                let stop = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                    tracing::error!("server: {e}");
                }
            });
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
