//! Experiment orchestration: configuration, sweeps over the total incentive,
//! Monte Carlo simulation and self-validation.

mod config;
mod experiment;
mod montecarlo;
mod sweep;
mod validate;

pub use config::{ExperimentConfig, PredictionErrors, SourceSpec, SystemSpec, DEFAULT_CONFIG_JSON};
pub use experiment::{Experiment, Method, Solved};
pub use montecarlo::{monte_carlo_regret, RegretStats};
pub use sweep::{format_float, run_sweep, write_sweep_csv, SweepResult, BAND_STD_ERRORS, CSV_HEADER};
pub use validate::{validate, Check, ValidationReport, VALIDATION_TRIALS};
