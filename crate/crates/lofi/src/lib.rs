//! Files, experiments and the command line for the `lofi-core` learners.
//!
//! - [`config`]: the `key = value` experiment file format and its validation.
//! - [`io`]: tabular CSV input, metric CSV output, belief checkpoints.
//! - [`runner`]: seeded multi-worker execution of runs, tuning and bandits.

pub mod config;
pub mod io;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::{run_bandit_experiment, run_experiment, tune};
