//! Command-line front end: configuration loading and sweep output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, Format, RunConfig, KEYS};
pub use run::{run, sweep_csv, RunError, RunSummary, CSV_HEADER};
