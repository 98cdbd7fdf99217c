use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ArimaParams;
use crate::lqr::LqrSystem;
use crate::privacy::PrivacyProfile;

/// How per-trial prediction errors are produced in Monte Carlo runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictionErrors {
    /// Zero-mean Gaussian with each source's covariance (times `1 + drift`),
    /// independent across sources.
    #[default]
    Sampled,
    /// The fitted forecasters run on held-out history windows.
    Forecaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub horizon: usize,
    pub x0: Vec<f64>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Config(format!("{name} must be a non-empty nested array")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Config(format!(
                "{name}: row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl SystemSpec {
    pub fn build(&self) -> Result<LqrSystem> {
        LqrSystem::new(
            matrix("system.a", &self.a)?,
            matrix("system.b", &self.b)?,
            matrix("system.c", &self.c)?,
            matrix("system.q", &self.q)?,
            matrix("system.r", &self.r)?,
            self.horizon,
            DVector::from_column_slice(&self.x0),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

fn default_sen() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default = "default_sen")]
    pub sen: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub window: usize,
}

impl SourceSpec {
    pub fn privacy(&self) -> Result<PrivacyProfile> {
        PrivacyProfile::new(self.sen, self.alpha, self.beta, self.gamma)
    }
}

fn default_eta() -> f64 {
    1e-8
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_average_window() -> usize {
    1
}

fn default_crosscheck_every() -> usize {
    1000
}

fn default_acs_max_iter() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub arima: ArimaParams,
    pub sources: Vec<SourceSpec>,
    /// Total incentives to evaluate.
    pub sweep: Vec<f64>,
    /// Monte Carlo episodes per sweep point.
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Test-time covariance is `Σ · (1 + drift)`.
    #[serde(default)]
    pub drift: Option<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub prediction_errors: PredictionErrors,
    /// Trailing objective changes averaged in the ACS stopping rule.
    #[serde(default = "default_average_window")]
    pub average_window: usize,
    /// ACS sweeps before giving up.
    #[serde(default = "default_acs_max_iter")]
    pub acs_max_iter: usize,
    /// Every n-th Monte Carlo trial is re-evaluated by full rollout.
    #[serde(default = "default_crosscheck_every")]
    pub crosscheck_every: usize,
}

/// The scalar ARIMA setup with the three linear-regression sources.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../configs/arima_default.json");

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_arima() -> Self {
        Self::from_json_str(DEFAULT_CONFIG_JSON).expect("bundled config is valid")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn drift_factor(&self) -> f64 {
        1.0 + self.drift.unwrap_or(0.0)
    }

    pub fn max_window(&self) -> usize {
        self.sources.iter().map(|s| s.window).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let sys = self.system.build()?;
        if self.sources.is_empty() {
            return Err(Error::Config("sources: need at least one source".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            s.privacy().map_err(|e| Error::Config(format!("sources[{i}]: {e}")))?;
            if s.window == 0 {
                return Err(Error::Config(format!("sources[{i}].window must be >= 1")));
            }
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep: need at least one total incentive".into()));
        }
        if let Some(bad) = self.sweep.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!("sweep: total incentive {bad} must be >= 0")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if let Some(d) = self.drift {
            if !(d.is_finite() && d >= -1.0) {
                return Err(Error::Config(format!("drift must be >= -1, got {d}")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.average_window == 0 {
            return Err(Error::Config("average_window must be >= 1".into()));
        }
        if self.acs_max_iter == 0 {
            return Err(Error::Config("acs_max_iter must be >= 1".into()));
        }
        if self.crosscheck_every == 0 {
            return Err(Error::Config("crosscheck_every must be >= 1".into()));
        }

        let horizon = sys.horizon;
        let p = sys.series_dim();
        let max_w = self.max_window();
        self.arima
            .validate_for(max_w, horizon)
            .map_err(|e| Error::Config(e.to_string()))?;
        let train_len = (self.arima.length as f64 * self.train_fraction).floor() as usize;
        let test_len = self.arima.length - train_len;
        for (i, s) in self.sources.iter().enumerate() {
            let pairs = (train_len + 1).saturating_sub(s.window + horizon);
            let needed = p * s.window + p * horizon;
            // Covariance estimation on the training split needs pT + 1 residuals.
            let needed = needed.max(p * horizon + 1);
            if pairs < needed {
                return Err(Error::Config(format!(
                    "sources[{i}]: training split of {train_len} steps gives {pairs} windows, need {needed}; \
                     increase arima.length"
                )));
            }
        }
        if test_len < max_w + horizon {
            return Err(Error::Config(format!(
                "test split of {test_len} steps cannot hold window {max_w} + horizon {horizon}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses() {
        let cfg = ExperimentConfig::default_arima();
        assert_eq!(cfg.system.horizon, 10);
        assert_eq!(cfg.sources.len(), 3);
        assert_eq!(cfg.sources[0].alpha, 4.0);
        assert_eq!(cfg.sources[2].window, 4);
        assert_eq!(cfg.sweep, vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
        assert_eq!(cfg.prediction_errors, PredictionErrors::Sampled);
        assert_eq!(cfg.drift_factor(), 1.0);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::default_arima();
        let back = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = DEFAULT_CONFIG_JSON.replacen("\"trials\"", "\"trials\" :: ", 1);
        let err = ExperimentConfig::from_json_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Config(msg) if msg.contains("line")), "{err}");
    }

    #[test]
    fn non_pd_cost_names_the_field() {
        let mut cfg = ExperimentConfig::default_arima();
        cfg.system.q = vec![vec![-1.0]];
        let err = cfg.validate().unwrap_err();
        assert!(matches!(&err, Error::Config(msg) if msg.contains("system.q")), "{err}");
    }

    #[test]
    fn rejects_bad_fields() {
        let base = ExperimentConfig::default_arima();
        let mut c = base.clone();
        c.sources.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.sweep = vec![-1.0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.arima.length = 60;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.system.a = vec![vec![1.0, 0.0], vec![1.0]];
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("system.a")));
        let mut c = base;
        c.sources[1].alpha = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("sources[1]")));
        let unknown = DEFAULT_CONFIG_JSON.replacen("\"trials\"", "\"trails\": 3, \"trials\"", 1);
        assert!(ExperimentConfig::from_json_str(&unknown).is_err());
    }
}
