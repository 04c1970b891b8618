//! Scoring functions for forecast evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary of one walk-forward evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Root-mean-square error relative to the mean scored actual.
    pub rrmse: f64,
    /// Mean absolute error in kW.
    pub mae: f64,
    /// Fraction of actuals inside the +-1.96 sigma predictive interval.
    pub coverage95: f64,
    /// Number of scored forecast/actual pairs.
    pub n_scored: usize,
    /// Nominal coefficients plus active latent components.
    pub nonzero_params: usize,
    /// Same-protocol rRMSE of the seasonal-naive baseline (load one week
    /// earlier), when computable.
    pub baseline_rrmse: Option<f64>,
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{} actuals vs {} predictions", actual.len(), predicted.len()),
        });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData { context: "no scored pairs".into() });
    }
    Ok(())
}

/// Root-mean-square error divided by the mean of the actuals:
/// `(1/y_bar) * sqrt((1/n) * sum (y - y_hat)^2)`.
pub fn rrmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    if mean.abs() < f64::MIN_POSITIVE {
        return Err(Error::ZeroMeanActuals);
    }
    let mse = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt() / mean)
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let n = actual.len() as f64;
    Ok(actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum::<f64>() / n)
}

/// Fraction of actuals within `z` predictive standard deviations of the
/// prediction.
pub fn coverage(actual: &[f64], predicted: &[f64], variance: &[f64], z: f64) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if variance.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{} actuals vs {} variances", actual.len(), variance.len()),
        });
    }
    if let Some(v) = variance.iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidConfig { message: format!("negative variance {v}") });
    }
    let hits = actual
        .iter()
        .zip(predicted)
        .zip(variance)
        .filter(|((y, p), v)| (*y - *p).abs() <= z * v.sqrt())
        .count();
    Ok(hits as f64 / actual.len() as f64)
}
