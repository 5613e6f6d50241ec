//! Scenario runner for the `basket-cds` pricing library: TOML scenarios,
//! built-in table presets, sensitivity sweeps and CSV output.

pub mod app;
pub mod config;
pub mod error;
pub mod rows;
pub mod scenario;
pub mod sweep;
pub mod tables;

pub use error::{CliError, CliResult};
