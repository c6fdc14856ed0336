//! File formats, run configuration, experiment drivers and the command line
//! for `neurotrack-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod runner;

pub use config::{BackendChoice, ResolvedRun, RunConfig, SceneRef};
pub use error::AppError;
