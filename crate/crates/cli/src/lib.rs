//! Batch front end of the repeated-interaction simulator.
//!
//! * [`config`]: flat `key = value` experiment files
//! * [`run`]: one experiment to `spectrum.csv`, `trajectory.csv`, `report.json`
//! * [`compare`]: measured-versus-predicted deltas and scaling exponents
//! * [`sweep`]: concurrent runs over one parameter

pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, Mode};
pub use error::CliError;
