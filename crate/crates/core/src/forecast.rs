//! Synthetic series, windowed linear forecasters and private forecast release.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lqr::is_symmetric;
use crate::privacy::{dp_noise_for_source, PrivacyProfile};

/// Ridge added to the normal equations and to covariance estimates.
pub const RIDGE: f64 = 1e-6;

/// A multichannel series: row `t` holds the `p` channel values at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn from_column(xs: &[f64]) -> Self {
        Self::new(DMatrix::from_column_slice(xs.len(), 1, xs))
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `start..start+len`, stacked time-major into one vector.
    pub fn stacked(&self, start: usize, len: usize) -> DVector<f64> {
        let p = self.channels();
        DVector::from_fn(len * p, |i, _| self.values[(start + i / p, i % p)])
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries::new(self.values.rows(start, end - start).clone_owned())
    }

    /// Splits at `floor(len * fraction)`.
    pub fn split(&self, fraction: f64) -> (TimeSeries, TimeSeries) {
        let cut = ((self.len() as f64) * fraction).floor() as usize;
        (self.slice(0, cut), self.slice(cut, self.len()))
    }

    /// Affine per-channel map onto [0, 1]. Flat channels map to 0.5.
    pub fn scaled_to_unit(&self) -> TimeSeries {
        let mut out = self.values.clone();
        for mut col in out.column_iter_mut() {
            let lo = col.min();
            let hi = col.max();
            let range = hi - lo;
            if range <= f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
                col.fill(0.5);
            } else {
                col.apply(|v| *v = (*v - lo) / range);
            }
        }
        TimeSeries::new(out)
    }

    /// Headerless CSV, one row per step.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        Error::InvalidInput(format!("line {}: bad number {f:?}: {e}", line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::InvalidInput(format!(
                        "line {}: expected {} columns, got {}",
                        line + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        let p = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Self::new(DMatrix::from_row_slice(rows.len(), p, &flat)))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.values.row_iter() {
            wtr.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// ARIMA(0,1,1): `x_t = x_{t−1} + e_t + θ e_{t−1}`, `e_t ~ N(0, noise_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArimaParams {
    pub theta: f64,
    pub noise_std: f64,
    pub length: usize,
}

impl Default for ArimaParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            noise_std: 0.1,
            length: 4000,
        }
    }
}

impl ArimaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::InvalidInput(format!(
                "arima.noise_std must be > 0, got {}",
                self.noise_std
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidInput("arima.theta must be finite".into()));
        }
        if self.length < 2 {
            return Err(Error::InvalidInput("arima.length must be >= 2".into()));
        }
        Ok(())
    }

    /// Also checks that the series can hold one window plus one horizon.
    pub fn validate_for(&self, window: usize, horizon: usize) -> Result<()> {
        self.validate()?;
        if self.length < window + horizon + 1 {
            return Err(Error::InvalidInput(format!(
                "arima.length {} < window {window} + horizon {horizon} + 1",
                self.length
            )));
        }
        Ok(())
    }
}

/// Unscaled ARIMA(0,1,1) path with `x_0 = 0`, one independent path per channel.
pub fn simulate_arima<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ArimaParams,
    channels: usize,
) -> Result<TimeSeries> {
    params.validate()?;
    if channels == 0 {
        return Err(Error::InvalidInput("need at least one channel".into()));
    }
    let normal = Normal::new(0.0, params.noise_std)
        .map_err(|e| Error::InvalidInput(format!("arima.noise_std: {e}")))?;
    let mut values = DMatrix::zeros(params.length, channels);
    for k in 0..channels {
        let mut prev_e = normal.sample(rng);
        for t in 1..params.length {
            let e = normal.sample(rng);
            values[(t, k)] = values[(t - 1, k)] + e + params.theta * prev_e;
            prev_e = e;
        }
    }
    Ok(TimeSeries::new(values))
}

/// [`simulate_arima`] followed by scaling every channel into [0, 1].
pub fn generate_arima<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ArimaParams,
    channels: usize,
) -> Result<TimeSeries> {
    Ok(simulate_arima(rng, params, channels)?.scaled_to_unit())
}

/// Direct multi-horizon linear regressor from the last `window` steps to the
/// next `horizon` steps. Only obtainable through [`fit_linear_forecaster`].
#[derive(Debug, Clone)]
pub struct Forecaster {
    window: usize,
    horizon: usize,
    channels: usize,
    /// `pT × p·w`.
    weights: DMatrix<f64>,
    intercept: DVector<f64>,
}

impl Forecaster {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> &DVector<f64> {
        &self.intercept
    }

    /// `pT` output length.
    pub fn output_len(&self) -> usize {
        self.channels * self.horizon
    }

    /// Forecast from a flattened (time-major) history window.
    pub fn predict(&self, history: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("history window", self.channels * self.window, history.len())?;
        Ok(&self.weights * history + &self.intercept)
    }

    /// Forecast of rows `end..end+T` from rows `end−w..end` of `series`.
    pub fn predict_at(&self, series: &TimeSeries, end: usize) -> Result<DVector<f64>> {
        check_len("series channels", self.channels, series.channels())?;
        if end < self.window || end > series.len() {
            return Err(Error::InsufficientData(format!(
                "need {} history rows before index {end}",
                self.window
            )));
        }
        self.predict(&series.stacked(end - self.window, self.window))
    }

    /// Forecast from the last `w` rows of `history`.
    pub fn predict_next(&self, history: &TimeSeries) -> Result<DVector<f64>> {
        self.predict_at(history, history.len())
    }

    /// Forecast residuals `prediction − truth` over every full window in `series`.
    pub fn residuals(&self, series: &TimeSeries) -> Result<Vec<DVector<f64>>> {
        check_len("series channels", self.channels, series.channels())?;
        let len = series.len();
        if len < self.window + self.horizon {
            return Ok(Vec::new());
        }
        (self.window..=len - self.horizon)
            .map(|s| Ok(self.predict_at(series, s)? - series.stacked(s, self.horizon)))
            .collect()
    }
}

/// Least-squares fit (with intercept and a [`RIDGE`] floor) of every
/// `w`-step history window to the following `T` steps.
pub fn fit_linear_forecaster(train: &TimeSeries, window: usize, horizon: usize) -> Result<Forecaster> {
    if window == 0 || horizon == 0 {
        return Err(Error::InvalidInput("window and horizon must be >= 1".into()));
    }
    let p = train.channels();
    if p == 0 {
        return Err(Error::InvalidInput("training series has no channels".into()));
    }
    let n_in = p * window;
    let n_out = p * horizon;
    let pairs = (train.len() + 1).saturating_sub(window + horizon);
    if pairs < n_in + n_out {
        return Err(Error::InsufficientData(format!(
            "{pairs} training pairs, need at least {}",
            n_in + n_out
        )));
    }

    let mut x = DMatrix::zeros(pairs, n_in);
    let mut y = DMatrix::zeros(pairs, n_out);
    for i in 0..pairs {
        let s = i + window;
        x.row_mut(i).copy_from(&train.stacked(s - window, window).transpose());
        y.row_mut(i).copy_from(&train.stacked(s, horizon).transpose());
    }
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &x_mean;
    }
    for mut row in y.row_iter_mut() {
        row -= &y_mean;
    }

    let mut gram = x.transpose() * &x;
    for i in 0..n_in {
        gram[(i, i)] += RIDGE;
    }
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Conditioning("normal equations not positive definite".into()))?;
    let beta = chol.solve(&(x.transpose() * &y)); // n_in × n_out
    let weights = beta.transpose();
    let intercept = y_mean.transpose() - &weights * x_mean.transpose();

    Ok(Forecaster {
        window,
        horizon,
        channels: p,
        weights,
        intercept,
    })
}

/// Sample covariance of residual vectors, symmetrized, plus `RIDGE · I`.
pub fn covariance_of_residuals(residuals: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let dim = residuals.first().map_or(0, |r| r.len());
    if dim == 0 {
        return Err(Error::InsufficientData("no residual vectors".into()));
    }
    if residuals.len() < dim + 1 {
        return Err(Error::InsufficientData(format!(
            "{} residual vectors, need at least {}",
            residuals.len(),
            dim + 1
        )));
    }
    let n = residuals.len() as f64;
    let mut mean = DVector::zeros(dim);
    for r in residuals {
        check_len("residual", dim, r.len())?;
        mean += r;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for r in residuals {
        let d = r - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n - 1.0;
    let mut cov = (&cov + cov.transpose()) * 0.5;
    for i in 0..dim {
        cov[(i, i)] += RIDGE;
    }
    Ok(cov)
}

/// Prediction-error covariance of `f` over every window of `holdout`.
pub fn estimate_error_covariance(f: &Forecaster, holdout: &TimeSeries) -> Result<DMatrix<f64>> {
    let residuals = f.residuals(holdout)?;
    if residuals.len() < f.output_len() + 1 {
        return Err(Error::InsufficientData(format!(
            "holdout yields {} residual vectors, need at least {}",
            residuals.len(),
            f.output_len() + 1
        )));
    }
    covariance_of_residuals(&residuals)
}

/// One forecasting source: privacy preferences, model and its error covariance.
#[derive(Debug, Clone)]
pub struct SourceProfile {
    pub privacy: PrivacyProfile,
    pub forecaster: Forecaster,
    pub sigma: DMatrix<f64>,
}

impl SourceProfile {
    pub fn new(privacy: PrivacyProfile, forecaster: Forecaster, sigma: DMatrix<f64>) -> Result<Self> {
        let src = Self {
            privacy,
            forecaster,
            sigma,
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        self.privacy.validate()?;
        let d = self.forecaster.output_len();
        if self.sigma.shape() != (d, d) {
            return Err(Error::InvalidInput(format!(
                "sigma must be {d}x{d}, got {}x{}",
                self.sigma.nrows(),
                self.sigma.ncols()
            )));
        }
        check_psd("sigma", &self.sigma)
    }
}

pub(crate) fn check_psd(name: &str, mat: &DMatrix<f64>) -> Result<()> {
    if !is_symmetric(mat, 1e-10) {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    let min = nalgebra::SymmetricEigen::new(mat.clone()).eigenvalues.min();
    if min < -1e-10 * mat.amax().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "{name} is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// A released forecast split into its error components.
#[derive(Debug, Clone)]
pub struct PrivateForecast {
    /// What the controller receives.
    pub value: DVector<f64>,
    /// Model error `prediction − truth`.
    pub prediction_error: DVector<f64>,
    /// Laplace noise added by the mechanism.
    pub dp_noise: DVector<f64>,
}

/// Source `src` forecasts from `history` and releases the prediction plus
/// Laplace noise at the budget bought by `rho`.
pub fn emit_private_forecast<R: Rng + ?Sized>(
    rng: &mut R,
    src: &SourceProfile,
    history: &TimeSeries,
    truth: &DVector<f64>,
    rho: f64,
) -> Result<PrivateForecast> {
    let f = &src.forecaster;
    check_len("truth", f.output_len(), truth.len())?;
    let prediction = f.predict_next(history)?;
    let dp_noise = dp_noise_for_source(rng, &src.privacy, rho, f.output_len())?;
    Ok(PrivateForecast {
        value: &prediction + &dp_noise,
        prediction_error: prediction - truth,
        dp_noise,
    })
}
