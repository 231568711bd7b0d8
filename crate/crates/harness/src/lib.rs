//! Configuration, ensemble orchestration, persistence and reporting for
//! `tglab-core` experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, Kind};
pub use error::{HarnessError, Result};
pub use manifest::RunManifest;
pub use runner::{execute, run_ensemble, RunOutput, Summary};
