//! Laplace mechanism and the incentive → privacy-budget curve.
//!
//! A source releasing `A(x) + Lap(0, Sen/ε)^d` is ε-locally differentially
//! private: for any two private inputs `x, x'` and any output set `S`,
//! `Pr[A(x) ∈ S] ≤ e^ε · Pr[A(x') ∈ S]`. Larger ε means less privacy and
//! less noise.
//!
//! A source paid incentive `ρ` accepts the budget
//! `ε(ρ) = α / (1 + e^{−β(ρ−γ)})`, which never reaches its cap `α`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyProfile {
    /// L1 sensitivity of the released forecast.
    pub sen: f64,
    /// Maximum acceptable privacy budget.
    pub alpha: f64,
    /// Growth rate of the budget with incentive.
    pub beta: f64,
    /// Incentive at which the budget reaches `alpha / 2`.
    pub gamma: f64,
}

impl PrivacyProfile {
    pub fn new(sen: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let prof = Self {
            sen,
            alpha,
            beta,
            gamma,
        };
        prof.validate()?;
        Ok(prof)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sen) {
            return Err(Error::InvalidInput(format!("sen must be > 0, got {}", self.sen)));
        }
        if !ok(self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !ok(self.beta) {
            return Err(Error::InvalidInput(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `2 (sen/α)²`, the variance reached as the incentive grows without bound.
    pub fn variance_floor(&self) -> f64 {
        2.0 * (self.sen / self.alpha).powi(2)
    }

    /// `e^{−β(ρ−γ)}`.
    fn decay(&self, rho: f64) -> f64 {
        (-self.beta * (rho - self.gamma)).exp()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidInput(format!("incentive must be >= 0, got {rho}")));
    }
    Ok(())
}

pub fn privacy_budget(rho: f64, prof: &PrivacyProfile) -> Result<f64> {
    check_rho(rho)?;
    Ok(prof.alpha / (1.0 + prof.decay(rho)))
}

/// Per-component variance `2 (Sen/ε(ρ))²` of the Laplace noise.
pub fn laplace_variance(rho: f64, prof: &PrivacyProfile) -> Result<f64> {
    check_rho(rho)?;
    Ok(laplace_variance_unchecked(rho, prof))
}

pub(crate) fn laplace_variance_unchecked(rho: f64, prof: &PrivacyProfile) -> f64 {
    let ratio = prof.sen * (1.0 + prof.decay(rho)) / prof.alpha;
    2.0 * ratio * ratio
}

/// `dσ²/dρ = −4β (sen/α)² e (1 + e)` with `e = e^{−β(ρ−γ)}`. Always negative.
pub fn laplace_variance_derivative(rho: f64, prof: &PrivacyProfile) -> f64 {
    let e = prof.decay(rho);
    -4.0 * prof.beta * (prof.sen / prof.alpha).powi(2) * e * (1.0 + e)
}

/// `d` i.i.d. draws from `Lap(0, scale)` by inverse-CDF transform of one
/// open-interval uniform per component.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64, dim: usize) -> Result<DVector<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput(format!("Laplace scale must be > 0, got {scale}")));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("Laplace dimension must be >= 1".into()));
    }
    Ok(DVector::from_fn(dim, |_, _| {
        let u: f64 = rng.sample(Open01);
        let centered = u - 0.5;
        -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
    }))
}

/// Noise a source adds to its `dim`-long forecast when paid `rho`.
pub fn dp_noise_for_source<R: Rng + ?Sized>(
    rng: &mut R,
    prof: &PrivacyProfile,
    rho: f64,
    dim: usize,
) -> Result<DVector<f64>> {
    let eps = privacy_budget(rho, prof)?;
    sample_laplace(rng, prof.sen / eps, dim)
}
