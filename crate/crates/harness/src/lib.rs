//! Convergence studies, audits and file output for `glideflow`.
//!
//! Runs are described by a [`RunConfig`] read from TOML. The [`commands`]
//! module implements the operations exposed by the `glideflow` binary.

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod study;

pub use config::{load_config, save_config, RunConfig};
pub use error::{HarnessError, Result};
