//! Experiment runner for `uhs-core`: TOML configuration, subcommands, and
//! CSV/JSON artifacts with a run manifest.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod field_csv;
pub mod manifest;
pub mod table;

pub use commands::{run, RunOptions, RunOutput, Subcommand};
pub use config::ExperimentConfig;
pub use error::{LabError, Result};
