use nalgebra::{DMatrix, DVector};

use super::pgd::{minimize, SolverOptions, SubproblemSolution};
use super::simplex::project_simplex_unchecked;
use super::{check_sources, effective_matrix, Allocation, SourceModel};
use crate::error::{check_len, Result};
use crate::privacy::laplace_variance;

fn effective_matrices<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    incentives: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    sources
        .iter()
        .zip(incentives)
        .map(|(s, &rho)| Ok(effective_matrix(psi, s.sigma(), laplace_variance(rho.max(0.0), s.privacy())?)))
        .collect()
}

/// Expected regret as a function of the coefficients, incentives held fixed.
pub fn coefficient_objective<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    incentives: &[f64],
    coeffs: &[DVector<f64>],
) -> Result<f64> {
    super::expected_regret(
        psi,
        sources,
        &Allocation {
            coeffs: coeffs.to_vec(),
            incentives: incentives.to_vec(),
        },
    )
}

/// Minimizes `Σ_i c_iᵀ H_i c_i` with `H_i = Ψ ⊙ (Σ_i + σ²(ρ_i) I)` over
/// coefficients whose per-coordinate columns lie on the unit simplex.
pub fn solve_coefficients<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    incentives: &[f64],
    init: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<SubproblemSolution<Vec<DVector<f64>>>> {
    let dim = check_sources(psi, sources)?;
    let n = sources.len();
    check_len("incentives", n, incentives.len())?;
    Allocation {
        coeffs: init.to_vec(),
        incentives: incentives.to_vec(),
    }
    .check_coefficients(dim)?;
    let hs = effective_matrices(psi, sources, incentives)?;

    let x0: Vec<f64> = init.iter().flat_map(|c| c.iter().copied()).collect();
    let block = |x: &[f64], i: usize| DVector::from_column_slice(&x[i * dim..(i + 1) * dim]);
    let f = |x: &[f64]| {
        (0..n)
            .map(|i| {
                let c = block(x, i);
                c.dot(&(&hs[i] * &c))
            })
            .sum::<f64>()
    };
    let grad = |x: &[f64]| {
        (0..n)
            .flat_map(|i| (&hs[i] * block(x, i) * 2.0).data.as_vec().clone())
            .collect::<Vec<f64>>()
    };
    let project = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        let mut column = vec![0.0; n];
        for j in 0..dim {
            for i in 0..n {
                column[i] = v[i * dim + j];
            }
            for (i, x) in project_simplex_unchecked(&column, 1.0).into_iter().enumerate() {
                out[i * dim + j] = x;
            }
        }
        out
    };

    let out = minimize(x0, f, grad, project, opts);
    let coeffs = (0..n).map(|i| block(&out.x, i)).collect();
    Ok(SubproblemSolution {
        value: coeffs,
        objective: out.objective,
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
        converged: out.kkt_residual <= opts.kkt_tol,
    })
}
