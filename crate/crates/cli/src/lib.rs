//! Command-line front end for `aks-core`: declarative run configs, the
//! subcommand pipeline and artifact export.

pub mod config;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use run::{run, Command, Outcome, Overrides, RunError};
