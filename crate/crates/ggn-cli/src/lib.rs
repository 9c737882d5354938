//! Experiment runner for the regularized Gauss-Newton / ILQR / IDDP solvers:
//! JSON configs in, trace CSV and report JSON out.

// `!(x > 0.0)` also rejects NaN, which is the point of those guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod certify;
pub mod compare;
pub mod config;
pub mod error;
pub mod run;
pub mod setup;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::CliError;

/// Worker cap from `GGN_THREADS`, else the available parallelism.
pub fn worker_limit() -> usize {
    std::env::var("GGN_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
