//! Synthetic outdoor-temperature generator: annual and diurnal cosine
//! shapes plus stationary AR(1) weather noise.

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Climate shape and noise parameters, in degrees Celsius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherParams {
    /// Long-run mean temperature.
    pub mean_c: f64,
    /// Half peak-to-peak swing of the annual cycle (coldest mid-January).
    pub annual_amplitude_c: f64,
    /// Half peak-to-peak swing of the daily cycle (coldest around 04:00).
    pub diurnal_amplitude_c: f64,
    /// AR(1) coefficient of the hourly noise process, in `[0, 1)`.
    pub ar_coeff: f64,
    /// Standard deviation of the AR(1) innovations.
    pub noise_std_c: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            mean_c: 3.0,
            annual_amplitude_c: 14.0,
            diurnal_amplitude_c: 3.0,
            ar_coeff: 0.97,
            noise_std_c: 0.6,
        }
    }
}

impl WeatherParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ar_coeff) {
            return Err(Error::InvalidConfig {
                message: format!("weather ar_coeff must be in [0, 1), got {}", self.ar_coeff),
            });
        }
        if self.noise_std_c < 0.0 {
            return Err(Error::InvalidConfig {
                message: "weather noise_std_c must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Deterministic seasonal mean at one timestamp (no noise).
    pub fn seasonal_mean(&self, ts: DateTime<Utc>) -> f64 {
        let day = ts.ordinal() as f64;
        let hour = ts.hour() as f64;
        let annual = (std::f64::consts::TAU * (day - 15.0) / 365.25).cos();
        let diurnal = (std::f64::consts::TAU * (hour - 4.0) / 24.0).cos();
        self.mean_c - self.annual_amplitude_c * annual - self.diurnal_amplitude_c * diurnal
    }
}

/// Draws an hourly temperature trace of the requested length. The AR(1)
/// component starts from its stationary distribution so the first winter is
/// statistically indistinguishable from later ones.
pub fn generate_weather<R: Rng>(
    start: DateTime<Utc>,
    hours: usize,
    params: &WeatherParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    let innov = Normal::new(0.0, params.noise_std_c).map_err(|_| Error::InvalidConfig {
        message: "weather noise_std_c must be finite".into(),
    })?;
    let stationary_std = params.noise_std_c / (1.0 - params.ar_coeff * params.ar_coeff).sqrt();
    let mut x = if params.noise_std_c > 0.0 {
        Normal::new(0.0, stationary_std).unwrap().sample(rng)
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(hours);
    for i in 0..hours {
        let ts = start + Duration::hours(i as i64);
        out.push(params.seasonal_mean(ts) + x);
        x = params.ar_coeff * x + innov.sample(rng);
    }
    Ok(out)
}
