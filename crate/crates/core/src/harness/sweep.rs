use std::io::Write;

use super::experiment::{Experiment, Method, Solved};
use super::montecarlo::{monte_carlo_regret, RegretStats};
use crate::error::Result;

/// Band, in standard errors, within which the analytic regret should sit.
pub const BAND_STD_ERRORS: f64 = 3.0;

pub const CSV_HEADER: [&str; 10] = [
    "rho_total",
    "method",
    "expected_regret",
    "empirical_mean",
    "empirical_std",
    "empirical_median",
    "iterations",
    "src_index",
    "rho_i",
    "mean_c_i",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rho_total: f64,
    pub method: Method,
    /// Analytic expected regret under the training covariances.
    pub expected_regret: f64,
    pub empirical: RegretStats,
    pub iterations: usize,
    pub converged: bool,
    pub rho_i: Vec<f64>,
    /// Mean of each source's coefficient entries.
    pub mean_c_i: Vec<f64>,
}

impl SweepResult {
    pub fn from_solved(solved: &Solved, empirical: RegretStats) -> Self {
        Self {
            rho_total: solved.rho_total,
            method: solved.method,
            expected_regret: solved.expected_regret,
            empirical,
            iterations: solved.iterations,
            converged: solved.converged,
            rho_i: solved.allocation.incentives.clone(),
            mean_c_i: solved.allocation.mean_coefficients(),
        }
    }

    /// `|empirical mean − analytic| / standard error`.
    pub fn z_score(&self) -> f64 {
        let se = self.empirical.std_error();
        let gap = (self.empirical.mean - self.expected_regret).abs();
        if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within_band(&self) -> bool {
        self.z_score() <= BAND_STD_ERRORS
    }

    /// Index of the source with the largest mean coefficient (first on ties).
    pub fn dominant_source(&self) -> usize {
        argmax(&self.mean_c_i)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Solves and simulates every sweep point for both methods, with
/// `exp.config.trials` episodes each. Every point reuses `seed`, so ACS and
/// Uniform see the same truth segments and source noise draws.
pub fn run_sweep(exp: &Experiment, seed: u64, workers: usize) -> Result<Vec<SweepResult>> {
    let mut out = Vec::with_capacity(exp.config.sweep.len() * Method::ALL.len());
    for &rho_total in &exp.config.sweep {
        for method in Method::ALL {
            let solved = exp.solve(rho_total, method)?;
            let stats = monte_carlo_regret(exp, &solved.allocation, exp.config.trials, seed, workers)?;
            out.push(SweepResult::from_solved(&solved, stats));
        }
    }
    Ok(out)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per (sweep point, method, source).
pub fn write_sweep_csv<W: Write>(writer: W, results: &[SweepResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in results {
        for (i, (rho_i, c_i)) in r.rho_i.iter().zip(&r.mean_c_i).enumerate() {
            w.write_record([
                format_float(r.rho_total),
                r.method.to_string(),
                format_float(r.expected_regret),
                format_float(r.empirical.mean),
                format_float(r.empirical.std),
                format_float(r.empirical.median),
                r.iterations.to_string(),
                i.to_string(),
                format_float(*rho_i),
                format_float(*c_i),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
