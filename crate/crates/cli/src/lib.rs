//! Configuration and orchestration behind the `fdreg` binary.

pub mod config;
pub mod runner;

pub use config::ExperimentConfig;
