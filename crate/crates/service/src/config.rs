use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use url::Url;

/// Environment variables read by the `serve` command when a flag is absent.
pub mod env {
    pub const PORT: &str = "TOPOSTUDIO_PORT";
    pub const BIND: &str = "TOPOSTUDIO_BIND";
    pub const DATA_DIR: &str = "TOPOSTUDIO_DATA_DIR";
    pub const WORKERS: &str = "TOPOSTUDIO_WORKERS";
    pub const REMOTE_URL: &str = "TOPOSTUDIO_REMOTE_URL";
    pub const MAX_IMAGE_SIDE: &str = "TOPOSTUDIO_MAX_IMAGE_SIDE";
    pub const CORS_ORIGIN: &str = "TOPOSTUDIO_CORS_ORIGIN";
}

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_IMAGE_SIDE: u32 = 4096;
pub const DEFAULT_STL_HEIGHT: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    /// Concurrent generation jobs.
    pub workers: usize,
    /// Base URL of the generation service used by the `remote` backend.
    /// Requests cannot name their own URL.
    pub remote_url: Option<Url>,
    /// Largest accepted sketch width or height in pixels.
    pub max_image_side: u32,
    /// Extrusion height of `model.stl`.
    pub stl_height: f64,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("topostudio-data"),
            workers: default_workers(),
            remote_url: None,
            max_image_side: DEFAULT_MAX_IMAGE_SIDE,
            stl_height: DEFAULT_STL_HEIGHT,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
