//! Pipeline service for storyguard: project persistence, the per-story stage
//! machine, the `/v1` HTTP API and the command-line front end.

pub mod api;
pub mod batch;
pub mod cli;
pub mod client;
pub mod engine;
pub mod project;
pub mod service;
pub mod store;
pub mod views;

pub use engine::{DataPaths, Engine};
pub use project::Project;
pub use service::{Service, ServiceError, Stage, StageOutcome};
