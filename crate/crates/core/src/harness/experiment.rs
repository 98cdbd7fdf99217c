use std::fmt;

use nalgebra::{Cholesky, DMatrix};

use super::config::ExperimentConfig;
use crate::allocator::{
    acs, expected_regret, solve_coefficients, uniform_allocation, AcsOptions, AcsReport, Allocation, SolverOptions,
};
use crate::error::{Error, Result};
use crate::forecast::{estimate_error_covariance, fit_linear_forecaster, generate_arima, SourceProfile, TimeSeries};
use crate::lqr::{compile_lqr, CompiledLqr, LqrSystem};
use crate::rng::{substream, SETUP_TRIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Acs,
    Uniform,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Acs, Method::Uniform];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Acs => write!(f, "ACS"),
            Method::Uniform => write!(f, "Uniform"),
        }
    }
}

/// Everything derived from a config: compiled controller, data splits and
/// fitted sources. Immutable once built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: LqrSystem,
    pub compiled: CompiledLqr,
    pub train: TimeSeries,
    pub test: TimeSeries,
    /// Sources with `Σ` estimated on the training split.
    pub sources: Vec<SourceProfile>,
    /// Lower Cholesky factors of the test-time covariances `Σ (1 + drift)`.
    pub test_sigma_factors: Vec<DMatrix<f64>>,
}

/// An allocation plus how it was obtained.
#[derive(Debug, Clone)]
pub struct Solved {
    pub method: Method,
    pub rho_total: f64,
    pub allocation: Allocation,
    pub expected_regret: f64,
    pub iterations: usize,
    pub converged: bool,
    pub report: Option<AcsReport>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let system = config.system.build()?;
        let compiled = compile_lqr(&system)?;
        let horizon = system.horizon;
        let channels = system.series_dim();

        let mut rng = substream(config.base_seed, SETUP_TRIAL, 0);
        let series = generate_arima(&mut rng, &config.arima, channels)?;
        let (train, test) = series.split(config.train_fraction);

        let mut sources = Vec::with_capacity(config.sources.len());
        for spec in &config.sources {
            let forecaster = fit_linear_forecaster(&train, spec.window, horizon)?;
            let sigma = estimate_error_covariance(&forecaster, &train)?;
            sources.push(SourceProfile::new(spec.privacy()?, forecaster, sigma)?);
        }

        let factor = config.drift_factor();
        let test_sigma_factors = sources
            .iter()
            .map(|s| {
                Cholesky::new(&s.sigma * factor)
                    .map(|c| c.l())
                    .ok_or_else(|| Error::Conditioning("test covariance is not positive definite".into()))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            config: config.clone(),
            system,
            compiled,
            train,
            test,
            sources,
            test_sigma_factors,
        })
    }

    /// The same experiment with test-time covariances equal to the training ones.
    pub fn without_drift(&self) -> Result<Self> {
        let mut config = self.config.clone();
        config.drift = None;
        let test_sigma_factors = self
            .sources
            .iter()
            .map(|s| {
                Cholesky::new(s.sigma.clone())
                    .map(|c| c.l())
                    .ok_or_else(|| Error::Conditioning("covariance is not positive definite".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            test_sigma_factors,
            ..self.clone()
        })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.compiled.psi
    }

    pub fn series_len(&self) -> usize {
        self.compiled.series_len()
    }

    pub fn acs_options(&self) -> AcsOptions {
        AcsOptions {
            eta: self.config.eta,
            average_window: self.config.average_window,
            max_iter: self.config.acs_max_iter,
            solver: SolverOptions::default(),
        }
    }

    pub fn uniform(&self, rho_total: f64) -> Result<Allocation> {
        uniform_allocation(self.sources.len(), rho_total, self.series_len())
    }

    pub fn expected_regret(&self, alloc: &Allocation) -> Result<f64> {
        expected_regret(self.psi(), &self.sources, alloc)
    }

    /// Same objective, with every `Σ_i` scaled to the test-time covariance.
    pub fn expected_regret_under_drift(&self, alloc: &Allocation) -> Result<f64> {
        let factor = self.config.drift_factor();
        let drifted: Vec<_> = self
            .sources
            .iter()
            .map(|s| crate::allocator::SourceNoise {
                privacy: s.privacy,
                sigma: &s.sigma * factor,
            })
            .collect();
        expected_regret(self.psi(), &drifted, alloc)
    }

    /// Optimal expected regret once every source's privacy budget has
    /// saturated at `α`, the limit of the ACS curve as the total incentive grows.
    pub fn floor_regret(&self) -> Result<f64> {
        let n = self.sources.len();
        let saturated = vec![f64::INFINITY; n];
        let init = self.uniform(0.0)?.coeffs;
        let sol = solve_coefficients(self.psi(), &self.sources, &saturated, &init, &SolverOptions::default())?;
        Ok(sol.objective)
    }

    pub fn solve(&self, rho_total: f64, method: Method) -> Result<Solved> {
        let uniform = self.uniform(rho_total)?;
        match method {
            Method::Uniform => Ok(Solved {
                method,
                rho_total,
                expected_regret: self.expected_regret(&uniform)?,
                allocation: uniform,
                iterations: 0,
                converged: true,
                report: None,
            }),
            Method::Acs => {
                let report = acs(self.psi(), &self.sources, rho_total, &uniform, &self.acs_options())?;
                Ok(Solved {
                    method,
                    rho_total,
                    allocation: report.allocation.clone(),
                    expected_regret: report.objective(),
                    iterations: report.iterations,
                    converged: report.converged && report.subproblems_converged,
                    report: Some(report),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_experiment_builds() {
        let exp = Experiment::build(&ExperimentConfig::default_arima()).unwrap();
        assert_eq!(exp.sources.len(), 3);
        assert_eq!(exp.series_len(), 10);
        assert_eq!(exp.train.len() + exp.test.len(), exp.config.arima.length);
        for s in &exp.sources {
            s.validate().unwrap();
        }
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = ExperimentConfig::default_arima();
        let a = Experiment::build(&cfg).unwrap();
        let b = Experiment::build(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.sources[0].sigma, b.sources[0].sigma);
    }

    #[test]
    fn single_source_methods_coincide() {
        let mut cfg = ExperimentConfig::default_arima();
        cfg.sources.truncate(1);
        let exp = Experiment::build(&cfg).unwrap();
        let a = exp.solve(1.0, Method::Acs).unwrap();
        let u = exp.solve(1.0, Method::Uniform).unwrap();
        assert_eq!(a.allocation, u.allocation);
        assert_eq!(a.expected_regret, u.expected_regret);
    }
}
