//! Command-line pipelines, the live control loop and its WebSocket service.
//!
//! [`commands`] holds one entry point per subcommand of the `neuroarm`
//! binary; [`live`] is the closed loop they share.

pub mod commands;
pub mod config;
mod error;
pub mod hitl;
pub mod live;
pub mod protocol;
pub mod service;
pub mod telemetry;

pub use config::PipelineConfig;
pub use error::HarnessError;
