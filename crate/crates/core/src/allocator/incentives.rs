use nalgebra::{DMatrix, DVector};

use super::pgd::{minimize, SolverOptions, SubproblemSolution};
use super::simplex::project_simplex_unchecked;
use super::{check_sources, Allocation, SourceModel, SUM_TOL};
use crate::error::{check_len, Error, Result};
use crate::privacy::{laplace_variance_derivative, laplace_variance_unchecked};

/// `a_i = Σ_j Ψ_jj c_i[j]²`, the weight of source `i`'s Laplace variance in
/// the expected regret once the coefficients are fixed.
pub fn incentive_weights(psi: &DMatrix<f64>, coeffs: &[DVector<f64>]) -> Vec<f64> {
    let diag = psi.diagonal();
    coeffs
        .iter()
        .map(|c| c.iter().zip(diag.iter()).map(|(x, d)| d * x * x).sum())
        .collect()
}

/// Minimizes `Σ_i a_i σ_i²(ρ_i)` over `{ρ ≥ 0, Σρ_i = rho_total}` with the
/// coefficients held fixed. The reported objective is the full expected regret.
pub fn solve_incentives<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    coeffs: &[DVector<f64>],
    rho_total: f64,
    init: &[f64],
    opts: &SolverOptions,
) -> Result<SubproblemSolution<Vec<f64>>> {
    let dim = check_sources(psi, sources)?;
    check_len("coefficients", sources.len(), coeffs.len())?;
    check_len("incentives", sources.len(), init.len())?;
    if !(rho_total.is_finite() && rho_total >= 0.0) {
        return Err(Error::InvalidInput(format!("total incentive must be >= 0, got {rho_total}")));
    }
    Allocation {
        coeffs: coeffs.to_vec(),
        incentives: init.to_vec(),
    }
    .check(dim, rho_total)?;

    // Σ-part of the objective does not depend on ρ.
    let fixed: f64 = sources
        .iter()
        .zip(coeffs)
        .map(|(s, c)| c.dot(&(psi.component_mul(s.sigma()) * c)))
        .sum();
    let weights = incentive_weights(psi, coeffs);
    let f = |rho: &[f64]| {
        sources
            .iter()
            .zip(&weights)
            .zip(rho)
            .map(|((s, a), &r)| a * laplace_variance_unchecked(r.max(0.0), s.privacy()))
            .sum::<f64>()
    };

    if rho_total == 0.0 {
        let zeros = vec![0.0; sources.len()];
        let objective = fixed + f(&zeros);
        return Ok(SubproblemSolution {
            value: zeros,
            objective,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let grad = |rho: &[f64]| {
        sources
            .iter()
            .zip(&weights)
            .zip(rho)
            .map(|((s, a), &r)| a * laplace_variance_derivative(r.max(0.0), s.privacy()))
            .collect::<Vec<f64>>()
    };
    let project = |v: &[f64]| project_simplex_unchecked(v, rho_total);

    // Re-project once so rounding in the caller's init cannot leak through.
    let mut x0 = init.to_vec();
    if (x0.iter().sum::<f64>() - rho_total).abs() > SUM_TOL * 1e-3 || x0.iter().any(|&r| r < 0.0) {
        x0 = project(&x0);
    }

    let out = minimize(x0, f, grad, project, opts);
    Ok(SubproblemSolution {
        value: out.x,
        objective: fixed + out.objective,
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
        converged: out.kkt_residual <= opts.kkt_tol,
    })
}
