//! Configuration-driven experiment runner for `nanorx`.

pub mod config;
pub mod error;
mod plots;
pub mod scenarios;

pub use config::{ExperimentConfig, Overrides, Scenario};
pub use error::{HarnessError, Result};
pub use scenarios::{run, write_artifacts, Artifact};
