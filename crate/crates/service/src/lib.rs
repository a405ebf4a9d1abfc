//! HTTP service around the matchmaking engine: one serialized command
//! order, a write-ahead JSONL log, and a per-user server-sent event stream.

mod app;
mod auth;
mod config;
mod error;
mod routes;
mod stream;

pub use app::{App, Clock, ManualClock, SystemClock};
pub use auth::Principal;
pub use config::{ServeConfig, TokenEntry};
pub use error::ApiError;
pub use routes::router;
pub use stream::Notice;
