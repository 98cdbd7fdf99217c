//! Expected-regret objective and its minimization.
//!
//! With per-source errors `ΔS_i = ΔS_i^pc + ΔS_i^dp`, independent across
//! sources, zero-mean with covariance `Σ_i + σ_i²(ρ_i) I`, and the controller
//! acting on `Ŝ = Σ_i c_i ⊙ Ŝ_i` with `Σ_i c_i = 1`, the expected regret is
//!
//! ```text
//! E[ΔJ] = Σ_i c_iᵀ [Ψ ⊙ (Σ_i + σ_i²(ρ_i) I)] c_i
//! ```
//!
//! minimized over `c_i ≥ 0` (summing to one per coordinate) and `ρ_i ≥ 0`
//! (summing to the total incentive). The problem is biconvex: convex in the
//! coefficients for fixed incentives (Schur product of PSD matrices) and
//! convex in the incentives for fixed coefficients.

mod acs;
mod coefficients;
mod incentives;
mod pgd;
mod simplex;

pub use acs::{acs, AcsOptions, AcsReport};
pub use coefficients::{coefficient_objective, solve_coefficients};
pub use incentives::{incentive_weights, solve_incentives};
pub use pgd::{SolverOptions, SubproblemSolution};
pub use simplex::project_simplex;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::forecast::SourceProfile;
use crate::privacy::{laplace_variance, PrivacyProfile};

/// Feasibility slack on the equality constraints.
pub const SUM_TOL: f64 = 1e-9;
/// Feasibility slack on nonnegativity.
pub const NONNEG_TOL: f64 = 1e-12;

/// What the allocator needs to know about a source.
pub trait SourceModel {
    fn privacy(&self) -> &PrivacyProfile;
    /// Prediction-error covariance `Σ_i`.
    fn sigma(&self) -> &DMatrix<f64>;
}

impl SourceModel for SourceProfile {
    fn privacy(&self) -> &PrivacyProfile {
        &self.privacy
    }

    fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// A source described only by its noise parameters.
#[derive(Debug, Clone)]
pub struct SourceNoise {
    pub privacy: PrivacyProfile,
    pub sigma: DMatrix<f64>,
}

impl SourceModel for SourceNoise {
    fn privacy(&self) -> &PrivacyProfile {
        &self.privacy
    }

    fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Per-source combination coefficients, one entry per forecast component.
    pub coeffs: Vec<DVector<f64>>,
    /// Per-source incentives.
    pub incentives: Vec<f64>,
}

impl Allocation {
    pub fn n_sources(&self) -> usize {
        self.incentives.len()
    }

    pub fn total_incentive(&self) -> f64 {
        self.incentives.iter().sum()
    }

    /// Mean of each source's coefficient entries.
    pub fn mean_coefficients(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.mean()).collect()
    }

    /// Checks shapes, nonnegativity and the per-coordinate coefficient sums.
    pub fn check_coefficients(&self, dim: usize) -> Result<()> {
        if self.coeffs.is_empty() || self.coeffs.len() != self.incentives.len() {
            return Err(Error::Infeasible(format!(
                "{} coefficient vectors for {} incentives",
                self.coeffs.len(),
                self.incentives.len()
            )));
        }
        for c in &self.coeffs {
            check_len("coefficient vector", dim, c.len())?;
            if c.iter().any(|&x| !(x >= -NONNEG_TOL)) {
                return Err(Error::Infeasible("negative coefficient".into()));
            }
        }
        for j in 0..dim {
            let s: f64 = self.coeffs.iter().map(|c| c[j]).sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::Infeasible(format!("coefficients at {j} sum to {s}")));
            }
        }
        if self.incentives.iter().any(|&r| !(r >= -NONNEG_TOL)) {
            return Err(Error::Infeasible("negative incentive".into()));
        }
        Ok(())
    }

    /// Full feasibility including `Σρ_i = rho_total`.
    pub fn check(&self, dim: usize, rho_total: f64) -> Result<()> {
        self.check_coefficients(dim)?;
        let total = self.total_incentive();
        if (total - rho_total).abs() > SUM_TOL {
            return Err(Error::Infeasible(format!(
                "incentives sum to {total}, expected {rho_total}"
            )));
        }
        Ok(())
    }
}

/// `c_i = 1/n`, `ρ_i = ρ/n`.
pub fn uniform_allocation(n_sources: usize, rho_total: f64, dim: usize) -> Result<Allocation> {
    if n_sources == 0 {
        return Err(Error::InvalidInput("need at least one source".into()));
    }
    if !(rho_total.is_finite() && rho_total >= 0.0) {
        return Err(Error::InvalidInput(format!("total incentive must be >= 0, got {rho_total}")));
    }
    let share = 1.0 / n_sources as f64;
    Ok(Allocation {
        coeffs: vec![DVector::from_element(dim, share); n_sources],
        incentives: vec![rho_total * share; n_sources],
    })
}

/// `Ψ ⊙ (Σ + σ² I)`.
pub fn effective_matrix(psi: &DMatrix<f64>, sigma: &DMatrix<f64>, variance: f64) -> DMatrix<f64> {
    let mut inner = sigma.clone();
    for i in 0..inner.nrows() {
        inner[(i, i)] += variance;
    }
    psi.component_mul(&inner)
}

fn check_sources<S: SourceModel>(psi: &DMatrix<f64>, sources: &[S]) -> Result<usize> {
    if !psi.is_square() {
        return Err(Error::InvalidInput("psi must be square".into()));
    }
    let dim = psi.nrows();
    if sources.is_empty() {
        return Err(Error::InvalidInput("need at least one source".into()));
    }
    for s in sources {
        check_len("sigma rows", dim, s.sigma().nrows())?;
        check_len("sigma cols", dim, s.sigma().ncols())?;
    }
    Ok(dim)
}

/// `Σ_i c_iᵀ [Ψ ⊙ (Σ_i + σ²(ρ_i) I)] c_i`.
pub fn expected_regret<S: SourceModel>(
    psi: &DMatrix<f64>,
    sources: &[S],
    alloc: &Allocation,
) -> Result<f64> {
    let dim = check_sources(psi, sources)?;
    check_len("allocation sources", sources.len(), alloc.n_sources())?;
    alloc.check_coefficients(dim)?;
    let mut total = 0.0;
    for (src, (c, &rho)) in sources.iter().zip(alloc.coeffs.iter().zip(&alloc.incentives)) {
        let var = laplace_variance(rho.max(0.0), src.privacy())?;
        let h = effective_matrix(psi, src.sigma(), var);
        total += c.dot(&(&h * c));
    }
    Ok(total)
}

/// `Σ_i c_i ⊙ Ŝ_i`.
pub fn combine_forecasts(coeffs: &[DVector<f64>], forecasts: &[DVector<f64>]) -> Result<DVector<f64>> {
    check_len("forecast count", coeffs.len(), forecasts.len())?;
    let dim = coeffs
        .first()
        .ok_or_else(|| Error::InvalidInput("no forecasts to combine".into()))?
        .len();
    let mut out = DVector::zeros(dim);
    for (c, f) in coeffs.iter().zip(forecasts) {
        check_len("coefficient vector", dim, c.len())?;
        check_len("forecast", dim, f.len())?;
        out += c.component_mul(f);
    }
    Ok(out)
}
