//! Scenario runner for movement-primitive networks: parses JSON scenario
//! documents, executes simulation/certification/learning pipelines, and
//! emits CSV, JSON, and SVG artifacts.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod svg;

pub use config::{load_learn_config, load_scenario, Scenario};
pub use error::{CliError, Result};
pub use runner::{run_learn, run_scenario, RunOptions, RunSummary, StepFilter};
