//! Persistence, pipeline jobs and the `/api/v1` HTTP API.

pub mod api;
pub mod config;
pub mod error;
pub mod jobs;
pub mod state;
pub mod store;

pub use api::router;
pub use config::Config;
pub use error::ApiError;
pub use state::AppState;
