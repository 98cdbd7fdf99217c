//! Incentive allocation for differentially private timeseries forecasts
//! that feed a finite-horizon, input-driven LQR controller.
//!
//! The pipeline:
//!
//! 1. [`lqr`] compiles the controller into the quadratic form
//!    `ΔJ = (Ŝ − S)ᵀ Ψ (Ŝ − S)` for the regret caused by forecast errors.
//! 2. [`privacy`] maps a paid incentive to a Laplace-mechanism privacy budget
//!    through a logistic curve and samples the resulting noise.
//! 3. [`forecast`] produces synthetic ARIMA(0,1,1) data, fits windowed linear
//!    forecasters and estimates their prediction-error covariance.
//! 4. [`allocator`] minimizes the expected regret over incentives and
//!    per-coordinate combination coefficients with Alternate Convex Search.
//! 5. [`harness`] wires everything into sweeps, Monte Carlo validation and
//!    CSV output.

pub mod allocator;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod lqr;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
