//! Live best-worst annotation sessions over HTTP.
//!
//! [`state::AnnotationService`] holds all session logic without doing I/O;
//! [`http`] wraps it in an axum router backed by an append-only [`log`].

pub mod error;
pub mod http;
pub mod log;
pub mod state;
pub mod template;

pub use error::ServiceError;
pub use http::{router, serve, AppState};
pub use log::{replay, EventLog};
pub use state::{AnnotationService, ServiceConfig};
pub use template::{InstructionTemplate, TemplateStore};
