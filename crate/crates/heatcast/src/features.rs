//! Regressor construction: the nominal lagged heating-degree vector `phi`
//! and the latent seasonal vector `gamma`.
//!
//! `phi(t) = [1, dT(t), dT(t-1), ..., dT(t-n_b)]` where `dT = max(T_c - T_o, 0)`
//! is the heating-degree driver with threshold `T_c`.
//!
//! `gamma(t)` expands calendar covariates in truncated Fourier series (per
//! periodic input: `M` harmonics, cosine before sine), then replicates the
//! stacked expansion across a Kronecker product of binary indicator selectors
//! `[1, u, 1-u]` (weekend, summer) with the leading all-ones block dropped.
//! The resulting dimension is `2 * M * n_p * (3^n_b - 1)` for `n_p` periodic
//! and `n_b` binary inputs.

use chrono::{DateTime, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calendar::{Calendar, CalendarCovariates};
use crate::error::{Error, Result};
use crate::timeseries::ConsumerDataset;

/// Clamped heating-degree driver: `max(threshold - outdoor, 0)`.
pub fn heating_degrees(outdoor: f64, threshold: f64) -> f64 {
    (threshold - outdoor).max(0.0)
}

/// Configuration of the nominal lagged regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalConfig {
    /// Heating threshold temperature `T_c` in degC.
    pub threshold_temp: f64,
    /// Number of hourly lags `n_b`; the regressor holds `n_b + 1` values.
    pub lags: usize,
}

impl Default for NominalConfig {
    fn default() -> Self {
        Self { threshold_temp: 17.0, lags: 24 }
    }
}

impl NominalConfig {
    /// Length of `phi`: constant term plus `lags + 1` heating-degree entries.
    pub fn n_phi(&self) -> usize {
        self.lags + 2
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold_temp.is_finite() {
            return Err(Error::InvalidConfig {
                message: "threshold_temp must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Builds `phi` from heating-degree history given oldest-to-newest.
///
/// `history` must hold at least `lags + 1` values; the final entry is the
/// current hour. Output ordering is `[1, dT(t), dT(t-1), ..., dT(t-lags)]`.
pub fn build_phi(history: &[f64], lags: usize) -> Result<DVector<f64>> {
    let needed = lags + 1;
    if history.len() < needed {
        return Err(Error::InsufficientHistory { needed, have: history.len() });
    }
    let recent = &history[history.len() - needed..];
    let mut phi = DVector::zeros(needed + 1);
    phi[0] = 1.0;
    for (k, &v) in recent.iter().rev().enumerate() {
        phi[k + 1] = v;
    }
    Ok(phi)
}

/// Periodic calendar inputs available to the latent model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodicInput {
    TimeOfDay,
    DayOfWeek,
    WeekOfYear,
}

impl PeriodicInput {
    /// Natural period of the input in its own unit (hours, days, weeks).
    pub fn period(self) -> f64 {
        match self {
            PeriodicInput::TimeOfDay => 24.0,
            PeriodicInput::DayOfWeek => 7.0,
            PeriodicInput::WeekOfYear => 53.0,
        }
    }

    /// Extracts the input's value from the covariates.
    pub fn value(self, cov: &CalendarCovariates) -> f64 {
        match self {
            PeriodicInput::TimeOfDay => cov.hour_of_day,
            PeriodicInput::DayOfWeek => cov.day_of_week,
            PeriodicInput::WeekOfYear => cov.week_of_year,
        }
    }
}

/// Binary calendar indicators available to the latent model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryInput {
    Weekend,
    Summer,
}

impl BinaryInput {
    pub fn value(self, cov: &CalendarCovariates) -> f64 {
        let on = match self {
            BinaryInput::Weekend => cov.weekend,
            BinaryInput::Summer => cov.summer,
        };
        if on {
            1.0
        } else {
            0.0
        }
    }
}

/// One periodic input together with its basis boundary `l` (the expansion
/// uses arguments `j*pi*u / (2*l)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicTerm {
    pub input: PeriodicInput,
    pub boundary: f64,
}

impl PeriodicTerm {
    /// The quarter-period boundary `l = P/4`, which makes harmonic `j` have
    /// period `2P/j`, so the even harmonics form a Fourier series on `P` and
    /// the expansion is continuous across period boundaries.
    pub fn quarter_period(input: PeriodicInput) -> Self {
        Self { input, boundary: input.period() / 4.0 }
    }
}

/// Configuration of the latent seasonal regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentConfig {
    /// Harmonics per periodic input (`M`).
    pub harmonics: usize,
    /// Ordered periodic inputs with their boundaries.
    pub periodic: Vec<PeriodicTerm>,
    /// Ordered binary selector inputs.
    pub binary: Vec<BinaryInput>,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self::standard(8)
    }
}

impl LatentConfig {
    /// All three periodic inputs at quarter-period boundaries plus both
    /// binary selectors.
    pub fn standard(harmonics: usize) -> Self {
        Self {
            harmonics,
            periodic: vec![
                PeriodicTerm::quarter_period(PeriodicInput::TimeOfDay),
                PeriodicTerm::quarter_period(PeriodicInput::DayOfWeek),
                PeriodicTerm::quarter_period(PeriodicInput::WeekOfYear),
            ],
            binary: vec![BinaryInput::Weekend, BinaryInput::Summer],
        }
    }

    /// Time-of-day as the only periodic input, both binary selectors.
    /// At `harmonics = 8` this is the 128-dimensional configuration.
    pub fn time_of_day_only(harmonics: usize) -> Self {
        Self {
            harmonics,
            periodic: vec![PeriodicTerm::quarter_period(PeriodicInput::TimeOfDay)],
            binary: vec![BinaryInput::Weekend, BinaryInput::Summer],
        }
    }

    /// Empty latent model: `gamma` has dimension zero and predictions are
    /// purely nominal.
    pub fn none() -> Self {
        Self { harmonics: 1, periodic: Vec::new(), binary: Vec::new() }
    }

    /// Latent dimension `2 * M * n_p * (3^n_b - 1)`.
    pub fn n_gamma(&self) -> usize {
        let selector = 3usize.pow(self.binary.len() as u32) - 1;
        2 * self.harmonics * self.periodic.len() * selector
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonics == 0 {
            return Err(Error::InvalidConfig { message: "harmonics must be >= 1".into() });
        }
        for term in &self.periodic {
            if !(term.boundary > 0.0) {
                return Err(Error::InvalidConfig {
                    message: format!("boundary must be positive, got {}", term.boundary),
                });
            }
        }
        let mut seen = Vec::new();
        for term in &self.periodic {
            if seen.contains(&term.input) {
                return Err(Error::InvalidConfig { message: "duplicate periodic input".into() });
            }
            seen.push(term.input);
        }
        let mut seen = Vec::new();
        for b in &self.binary {
            if seen.contains(b) {
                return Err(Error::InvalidConfig { message: "duplicate binary input".into() });
            }
            seen.push(*b);
        }
        Ok(())
    }
}

/// Evaluates harmonic `j` of the basis at `u`:
/// `(cos(j*pi*u/(2*l)), sin(j*pi*u/(2*l)))`.
pub fn fourier_basis(u: f64, j: usize, boundary: f64) -> (f64, f64) {
    let arg = j as f64 * std::f64::consts::PI * u / (2.0 * boundary);
    (arg.cos(), arg.sin())
}

/// Stacks the Fourier expansions of all periodic inputs: input-major,
/// harmonic-minor, cosine before sine. Length `2 * M * n_p`.
pub fn build_gamma_p(cov: &CalendarCovariates, cfg: &LatentConfig) -> DVector<f64> {
    let mut out = DVector::zeros(2 * cfg.harmonics * cfg.periodic.len());
    let mut idx = 0;
    for term in &cfg.periodic {
        let u = term.input.value(cov);
        for j in 1..=cfg.harmonics {
            let (c, s) = fourier_basis(u, j, term.boundary);
            out[idx] = c;
            out[idx + 1] = s;
            idx += 2;
        }
    }
    out
}

/// Kronecker product of `[1, u, 1-u]` blocks over the configured binary
/// inputs, in declared order. Length `3^n_b`; the empty configuration yields
/// the scalar `[1]`.
pub fn build_gamma_b(cov: &CalendarCovariates, cfg: &LatentConfig) -> DVector<f64> {
    let mut out = DVector::from_element(1, 1.0);
    for b in &cfg.binary {
        let u = b.value(cov);
        let factor = [1.0, u, 1.0 - u];
        let mut next = DVector::zeros(out.len() * 3);
        for (i, &a) in out.iter().enumerate() {
            for (j, &f) in factor.iter().enumerate() {
                next[i * 3 + j] = a * f;
            }
        }
        out = next;
    }
    out
}

/// Full latent regressor: drops the leading constant block of the selector
/// (first entry of `gamma_b`) and Kronecker-multiplies the remaining
/// `3^n_b - 1` selector entries with the periodic stack `gamma_p`.
pub fn build_gamma(cov: &CalendarCovariates, cfg: &LatentConfig) -> DVector<f64> {
    let gb = build_gamma_b(cov, cfg);
    let gp = build_gamma_p(cov, cfg);
    let selector = gb.rows(1, gb.len() - 1);
    let mut out = DVector::zeros(selector.len() * gp.len());
    for (i, &sel) in selector.iter().enumerate() {
        for (j, &g) in gp.iter().enumerate() {
            out[i * gp.len() + j] = sel * g;
        }
    }
    out
}

/// Combined feature configuration for one consumer model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub nominal: NominalConfig,
    pub latent: LatentConfig,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        self.latent.validate()
    }
}

/// One fully built regressor row for an hour of the dataset timeline.
#[derive(Debug, Clone)]
pub struct RegressorRow {
    /// Index into the dataset timeline.
    pub index: usize,
    pub timestamp: DateTime<Utc>,
    pub phi: DVector<f64>,
    pub gamma: DVector<f64>,
    /// Observed load, absent when the hour's load is missing.
    pub y: Option<f64>,
}

/// All regressor rows for a dataset, with lookup by timeline index.
///
/// A row exists for hour `i` only when the temperature at hours
/// `i - lags ..= i` is fully usable (observed or interpolated); after a long
/// temperature gap the lag buffer therefore re-warms for `lags` hours before
/// rows resume.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    rows: Vec<RegressorRow>,
    by_index: Vec<Option<usize>>,
    n_phi: usize,
    n_gamma: usize,
}

impl FeatureTable {
    /// Builds rows for every eligible hour of the dataset.
    pub fn build(dataset: &ConsumerDataset, calendar: &Calendar, cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let n = dataset.len();
        let lags = cfg.nominal.lags;
        let mut rows = Vec::new();
        let mut by_index = vec![None; n];

        // Heating degrees where the temperature is usable, plus the length of
        // the usable run ending at each hour.
        let mut degrees = vec![0.0f64; n];
        let mut run = vec![0usize; n];
        for i in 0..n {
            if dataset.temperature.is_usable(i) {
                degrees[i] = heating_degrees(dataset.temperature.value(i), cfg.nominal.threshold_temp);
                run[i] = if i > 0 { run[i - 1] + 1 } else { 1 };
            }
        }

        for i in lags..n {
            if run[i] < lags + 1 {
                continue;
            }
            let phi = build_phi(&degrees[i - lags..=i], lags)?;
            let ts = dataset.load.timestamp(i);
            let gamma = build_gamma(&calendar.covariates(ts), &cfg.latent);
            let y = dataset.load.is_usable(i).then(|| dataset.load.value(i));
            by_index[i] = Some(rows.len());
            rows.push(RegressorRow { index: i, timestamp: ts, phi, gamma, y });
        }

        Ok(Self {
            rows,
            by_index,
            n_phi: cfg.nominal.n_phi(),
            n_gamma: cfg.latent.n_gamma(),
        })
    }

    /// Row for timeline index `i`, if the hour was eligible.
    pub fn row_for_index(&self, i: usize) -> Option<&RegressorRow> {
        self.by_index.get(i).copied().flatten().map(|r| &self.rows[r])
    }

    /// All rows in time order.
    pub fn rows(&self) -> &[RegressorRow] {
        &self.rows
    }

    /// Length of `phi`.
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Length of `gamma`.
    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }
}
