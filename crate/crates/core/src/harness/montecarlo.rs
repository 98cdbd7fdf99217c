//! Monte Carlo estimate of the realized regret of an allocation.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use super::config::PredictionErrors;
use super::experiment::Experiment;
use crate::allocator::{combine_forecasts, Allocation};
use crate::error::{Error, Result};
use crate::forecast::emit_private_forecast;
use crate::lqr::{regret_quadratic, regret_rollout};
use crate::privacy::dp_noise_for_source;
use crate::rng::{source_lane, substream, StreamRng, MAX_TRIAL, TRUTH_LANE};

#[derive(Debug, Clone, PartialEq)]
pub struct RegretStats {
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    /// Number of trials re-evaluated by rollout.
    pub crosschecks: usize,
    /// Largest `|rollout − quadratic| / (1 + |rollout|)` over those trials.
    pub max_crosscheck_gap: f64,
}

impl RegretStats {
    pub fn std_error(&self) -> f64 {
        self.std / (self.trials as f64).sqrt()
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error()
    }

    pub fn from_samples(mut samples: Vec<f64>, crosschecks: usize, max_gap: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            trials: n,
            mean,
            std: var.sqrt(),
            median: quantile(&samples, 0.5),
            q25: quantile(&samples, 0.25),
            q75: quantile(&samples, 0.75),
            min: samples[0],
            max: samples[n - 1],
            crosschecks,
            max_crosscheck_gap: max_gap,
        })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct TrialOutcome {
    regret: f64,
    crosscheck_gap: Option<f64>,
}

fn run_trial(exp: &Experiment, alloc: &Allocation, seed: u64, trial: u64) -> Result<TrialOutcome> {
    let horizon = exp.system.horizon;
    let dim = exp.series_len();
    let max_w = exp.config.max_window();
    let test = &exp.test;

    let mut truth_rng = substream(seed, trial, TRUTH_LANE);
    let start = rand::Rng::random_range(&mut truth_rng, max_w..=test.len() - horizon);
    let truth = test.stacked(start, horizon);

    let mut forecasts = Vec::with_capacity(exp.sources.len());
    for (i, src) in exp.sources.iter().enumerate() {
        let mut rng: StreamRng = substream(seed, trial, source_lane(i));
        let rho = alloc.incentives[i].max(0.0);
        let forecast = match exp.config.prediction_errors {
            PredictionErrors::Sampled => {
                let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let pred_err = &exp.test_sigma_factors[i] * z;
                let noise = dp_noise_for_source(&mut rng, &src.privacy, rho, dim)?;
                &truth + pred_err + noise
            }
            PredictionErrors::Forecaster => {
                let history = test.slice(start - src.forecaster.window(), start);
                emit_private_forecast(&mut rng, src, &history, &truth, rho)?.value
            }
        };
        forecasts.push(forecast);
    }
    let combined = combine_forecasts(&alloc.coeffs, &forecasts)?;
    let regret = regret_quadratic(&exp.compiled, &combined, &truth)?;
    let crosscheck_gap = if trial % exp.config.crosscheck_every as u64 == 0 {
        let roll = regret_rollout(&exp.system, &exp.compiled, &exp.system.x0, &combined, &truth)?;
        Some((roll - regret).abs() / (1.0 + roll.abs()))
    } else {
        None
    };
    Ok(TrialOutcome {
        regret,
        crosscheck_gap,
    })
}

/// Realized regret of `alloc` over `trials` episodes. Trial `k` draws only
/// from substreams `(seed, k, ·)`, and results are reduced in trial order, so
/// the output does not depend on `workers`.
pub fn monte_carlo_regret(
    exp: &Experiment,
    alloc: &Allocation,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<RegretStats> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if trials as u64 > MAX_TRIAL {
        return Err(Error::InvalidInput(format!("at most {MAX_TRIAL} trials")));
    }
    alloc.check_coefficients(exp.series_len())?;
    if alloc.n_sources() != exp.sources.len() {
        return Err(Error::InvalidInput("allocation does not match the sources".into()));
    }

    let outcomes = run_trials(exp, alloc, trials, seed, workers)?;
    let mut crosschecks = 0;
    let mut max_gap: f64 = 0.0;
    let mut samples = Vec::with_capacity(trials);
    for o in outcomes {
        samples.push(o.regret);
        if let Some(g) = o.crosscheck_gap {
            crosschecks += 1;
            max_gap = max_gap.max(g);
        }
    }
    RegretStats::from_samples(samples, crosschecks, max_gap)
}

#[cfg(feature = "parallel")]
fn run_trials(
    exp: &Experiment,
    alloc: &Allocation,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<TrialOutcome>> {
    use rayon::prelude::*;
    if workers <= 1 {
        return (0..trials as u64).map(|t| run_trial(exp, alloc, seed, t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(exp, alloc, seed, t))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn run_trials(
    exp: &Experiment,
    alloc: &Allocation,
    trials: usize,
    seed: u64,
    _workers: usize,
) -> Result<Vec<TrialOutcome>> {
    (0..trials as u64).map(|t| run_trial(exp, alloc, seed, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    #[test]
    fn quantiles_of_small_sample() {
        let s = RegretStats::from_samples(vec![4.0, 1.0, 3.0, 2.0], 0, 0.0).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.q25, 1.75);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(RegretStats::from_samples(vec![], 0, 0.0).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let exp = crate::harness::Experiment::build(&ExperimentConfig::default_arima()).unwrap();
        let alloc = exp.uniform(1.0).unwrap();
        let a = monte_carlo_regret(&exp, &alloc, 2000, 3, 1).unwrap();
        let b = monte_carlo_regret(&exp, &alloc, 2000, 3, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.crosschecks, 2);
        assert!(a.max_crosscheck_gap <= 1e-8);
    }

    #[test]
    fn forecaster_mode_runs() {
        let mut cfg = ExperimentConfig::default_arima();
        cfg.prediction_errors = PredictionErrors::Forecaster;
        let exp = crate::harness::Experiment::build(&cfg).unwrap();
        let alloc = exp.uniform(2.0).unwrap();
        let s = monte_carlo_regret(&exp, &alloc, 500, 1, 1).unwrap();
        assert!(s.mean > 0.0 && s.mean.is_finite());
    }
}
