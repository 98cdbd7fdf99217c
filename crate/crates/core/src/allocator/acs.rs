//! Alternate Convex Search over incentives and coefficients.

use nalgebra::DMatrix;

use super::pgd::SolverOptions;
use super::{check_sources, expected_regret, solve_coefficients, solve_incentives, Allocation, SourceModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcsOptions {
    /// Stop once the objective changes by less than this.
    pub eta: f64,
    /// Number of trailing objective changes averaged in the stopping test.
    pub average_window: usize,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for AcsOptions {
    fn default() -> Self {
        Self {
            eta: 1e-8,
            average_window: 1,
            max_iter: 500,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcsReport {
    pub allocation: Allocation,
    /// Expected regret before the first sweep and after each one.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Stopping test met before the iteration cap.
    pub converged: bool,
    /// Every subproblem reached its KKT tolerance.
    pub subproblems_converged: bool,
    /// Largest KKT residual over all subproblem solves.
    pub max_kkt_residual: f64,
}

impl AcsReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Alternates `ρ ← argmin_ρ E[ΔJ](c, ρ)` and `c ← argmin_c E[ΔJ](c, ρ)` from
/// `init` until the (optionally averaged) change in the objective drops below
/// `eta`.
pub fn acs<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    rho_total: f64,
    init: &Allocation,
    opts: &AcsOptions,
) -> Result<AcsReport> {
    let dim = check_sources(psi, sources)?;
    init.check(dim, rho_total)?;
    if opts.average_window == 0 {
        return Err(Error::InvalidInput("average_window must be >= 1".into()));
    }
    if !(opts.eta.is_finite() && opts.eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be > 0, got {}", opts.eta)));
    }

    let mut alloc = init.clone();
    let mut trace = vec![expected_regret(psi, sources, &alloc)?];
    // The algorithm seeds the previous objective with 0 so the first sweep
    // always runs unless the start is already within eta of zero.
    let gap = |trace: &[f64]| {
        let len = trace.len();
        let window = opts.average_window.min(len);
        let back = if len > window { trace[len - 1 - window] } else { 0.0 };
        (trace[len - 1] - back).abs() / window as f64
    };

    let mut iterations = 0;
    let mut subproblems_converged = true;
    let mut max_kkt: f64 = 0.0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if gap(&trace) < opts.eta {
            converged = true;
            break;
        }
        let rho = solve_incentives(psi, sources, &alloc.coeffs, rho_total, &alloc.incentives, &opts.solver)?;
        let coeffs = solve_coefficients(psi, sources, &rho.value, &alloc.coeffs, &opts.solver)?;
        subproblems_converged &= rho.converged && coeffs.converged;
        max_kkt = max_kkt.max(rho.kkt_residual).max(coeffs.kkt_residual);
        alloc = Allocation {
            coeffs: coeffs.value,
            incentives: rho.value,
        };
        trace.push(coeffs.objective);
        iterations += 1;
    }
    if !converged && gap(&trace) < opts.eta {
        converged = true;
    }

    Ok(AcsReport {
        allocation: alloc,
        objective_trace: trace,
        iterations,
        converged,
        subproblems_converged,
        max_kkt_residual: max_kkt,
    })
}
