//! HTTP job service around the topostudio engine.
//!
//! Jobs are submitted as a problem JSON or a colour-coded sketch PNG, run
//! asynchronously on a bounded worker pool, and leave four artifacts
//! (`density.json`, `preview.png`, `model.stl`, `metrics.json`). A finished
//! job can be iterated: the child regenerates from the parent's density
//! field with edited parameters or constraints.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/v1/jobs` | submit; 202 `{id}`, 400, 413, 422 `{issues}` |
//! | GET | `/api/v1/jobs` | all jobs, oldest first |
//! | GET | `/api/v1/jobs/{id}` | job summary |
//! | POST | `/api/v1/jobs/{id}/iterate` | child job; 404, 409 unless parent DONE |
//! | GET | `/api/v1/jobs/{id}/artifacts/{kind}` | artifact bytes; 409 unless DONE |
//! | GET | `/api/v1/klm?workflow=&n=` | KLM session time |
//! | GET | `/api/v1/health` | liveness |
//! | POST | `/api/v1/generate` | synchronous generation (remote backend protocol) |
//!
//! ```no_run
//! use topostudio_service::{spawn, ServiceConfig};
//!
//! let server = spawn(ServiceConfig { port: 0, ..Default::default() }).unwrap();
//! println!("listening on {}", server.base_url());
//! ```

pub mod api;
pub mod artifacts;
pub mod config;
pub mod server;
pub mod store;

pub use config::ServiceConfig;
pub use server::{serve, spawn, ServerHandle, ServiceError};
pub use store::{Job, JobState, JobStore};
