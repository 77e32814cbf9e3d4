//! Staged experiment runner: world generation, model training, λ sweeps with
//! and without drift compensation, and report generation. Every stage
//! records its inputs and output hashes in `manifest.json` under the output
//! root, so re-running a stage with unchanged inputs is a no-op.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::{EnrollmentMode, EvalConfig, ExperimentConfig, OUT_ENV};
pub use error::CliError;
pub use manifest::Manifest;
pub use stages::{cmd_evaluate, cmd_reproduce, cmd_run, cmd_train, cmd_world, Context, Outcome};
