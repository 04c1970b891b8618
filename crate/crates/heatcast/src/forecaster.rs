//! Point predictions with variance, walk-forward evaluation, and portfolio
//! aggregation.
//!
//! The walk-forward protocol mirrors live operation: fit on the training
//! span, then for each validation hour reveal the actual load, update the
//! model recursively, and issue a fresh H-hour-ahead forecast. A forecast
//! issued at hour `u` therefore uses load data through `u` only; the
//! temperature path up to the target is exogenous (actuals), matching the
//! known-temperature evaluation convention.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::error::{Error, Result};
use crate::estimator::{em_fit, recursive_update, EmOptions, FitReport, ModelState, SufficientStats};
use crate::features::{FeatureConfig, FeatureTable};
use crate::metrics::{coverage, mae, rrmse, EvalReport};
use crate::timeseries::ConsumerDataset;

/// One H-hour-ahead forecast for a single target hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub issue_time: DateTime<Utc>,
    pub target_time: DateTime<Utc>,
    /// Hours between issue and target.
    pub horizon: usize,
    /// Total prediction; exactly `y_nom + y_res`.
    pub y_hat: f64,
    /// Nominal (temperature-driven) contribution.
    pub y_nom: f64,
    /// Latent (seasonal residual) contribution.
    pub y_res: f64,
    /// Posterior-predictive variance `sigma2 + gamma' P gamma`.
    pub variance: f64,
    /// Noise-only variance `sigma2` (for uncorrelated portfolio sums).
    pub noise_variance: f64,
}

/// Evaluates the model at one regressor pair.
pub fn predict(state: &ModelState, phi: &DVector<f64>, gamma: &DVector<f64>) -> Result<(f64, f64, f64, f64)> {
    if phi.len() != state.theta.len() || gamma.len() != state.z_hat.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "predict: phi {} (expected {}), gamma {} (expected {})",
                phi.len(),
                state.theta.len(),
                gamma.len(),
                state.z_hat.len()
            ),
        });
    }
    let y_nom = state.theta.dot(phi);
    let y_res = state.z_hat.dot(gamma);
    let latent_var = if gamma.is_empty() { 0.0 } else { (&state.p_cov * gamma).dot(gamma).max(0.0) };
    Ok((y_nom, y_res, state.sigma2 + latent_var, state.sigma2))
}

/// Issues forecasts for the `horizon` hours following `issue_index` on the
/// dataset timeline, using the state as-is (no updates). Fails when a target
/// hour has no warm regressor (missing temperature history).
pub fn predict_horizon(
    state: &ModelState,
    dataset: &ConsumerDataset,
    table: &FeatureTable,
    issue_index: usize,
    horizon: usize,
    clamp_non_negative: bool,
) -> Result<Vec<Forecast>> {
    if horizon == 0 {
        return Err(Error::InvalidConfig { message: "horizon must be >= 1".into() });
    }
    let issue_time = dataset.load.timestamp(issue_index);
    let mut out = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let idx = issue_index + h;
        let row = table.row_for_index(idx).ok_or(Error::MissingTemperature {
            timestamp: dataset.load.timestamp(idx.min(dataset.len().saturating_sub(1))),
        })?;
        let (y_nom, y_res, variance, noise_variance) = predict(state, &row.phi, &row.gamma)?;
        let raw = y_nom + y_res;
        let y_hat = if clamp_non_negative { raw.max(0.0) } else { raw };
        out.push(Forecast {
            issue_time,
            target_time: row.timestamp,
            horizon: h,
            y_hat,
            y_nom,
            y_res,
            variance,
            noise_variance,
        });
    }
    Ok(out)
}

/// Walk-forward evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardOptions {
    /// Boundary between training and validation; training uses hours before
    /// the split, the walk starts at the split.
    pub split: DateTime<Utc>,
    /// Forecast lead time in hours.
    pub horizon: usize,
    /// Clamp point predictions at zero (variance untouched).
    pub clamp_non_negative: bool,
    /// Forgetting factor for the streaming statistics.
    pub lambda: f64,
}

impl WalkForwardOptions {
    pub fn new(split: DateTime<Utc>) -> Self {
        Self { split, horizon: 24, clamp_non_negative: false, lambda: 1.0 }
    }
}

/// One recorded walk-forward forecast with its eventual actual.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRecord {
    pub forecast: Forecast,
    /// Actual load at the target hour, when observed.
    pub actual: Option<f64>,
    /// Seasonal-naive reference: the load one week before the target.
    pub naive: Option<f64>,
}

/// Everything produced by one walk-forward run.
#[derive(Debug, Clone)]
pub struct WalkForwardOutput {
    pub report: EvalReport,
    pub records: Vec<ForecastRecord>,
    /// Final model state after the last recursive update.
    pub state: ModelState,
    /// Batch-fit convergence report for the training span.
    pub fit: FitReport,
}

/// Trains on the pre-split span, then walks the validation span hour by
/// hour: update with the revealed actual, then issue the H-ahead forecast.
/// Scores every recorded forecast whose target actual is observed.
pub fn walk_forward(
    dataset: &ConsumerDataset,
    calendar: &Calendar,
    features: &FeatureConfig,
    em: &EmOptions,
    opts: &WalkForwardOptions,
) -> Result<WalkForwardOutput> {
    if opts.horizon == 0 {
        return Err(Error::InvalidConfig { message: "horizon must be >= 1".into() });
    }
    let split_idx = dataset.load.index_of(opts.split).ok_or_else(|| Error::InvalidConfig {
        message: format!("split {} is not on the dataset timeline", opts.split),
    })?;
    let table = FeatureTable::build(dataset, calendar, features)?;

    let mut stats = SufficientStats::new(table.n_phi(), table.n_gamma(), opts.lambda)?;
    let mut n_train = 0usize;
    for row in table.rows().iter().take_while(|r| r.index < split_idx) {
        if let Some(y) = row.y {
            stats.update(&row.phi, &row.gamma, y)?;
            n_train += 1;
        }
    }
    if n_train < table.n_phi() {
        return Err(Error::InsufficientData {
            context: format!(
                "training span holds {n_train} usable hours, need at least {}",
                table.n_phi()
            ),
        });
    }
    let (mut state, fit) = em_fit(stats, em)?;

    let n = dataset.len();
    let mut records = Vec::new();
    for u in split_idx..n {
        if let Some(row) = table.row_for_index(u) {
            if let Some(y) = row.y {
                recursive_update(&mut state, &row.phi, &row.gamma, y, em)?;
            }
        }
        let target = u + opts.horizon;
        if target >= n {
            continue;
        }
        let Some(trow) = table.row_for_index(target) else { continue };
        let (y_nom, y_res, variance, noise_variance) = predict(&state, &trow.phi, &trow.gamma)?;
        let raw = y_nom + y_res;
        let y_hat = if opts.clamp_non_negative { raw.max(0.0) } else { raw };
        let naive = target
            .checked_sub(168)
            .filter(|&i| dataset.load.is_usable(i))
            .map(|i| dataset.load.value(i));
        records.push(ForecastRecord {
            forecast: Forecast {
                issue_time: dataset.load.timestamp(u),
                target_time: trow.timestamp,
                horizon: opts.horizon,
                y_hat,
                y_nom,
                y_res,
                variance,
                noise_variance,
            },
            actual: trow.y,
            naive,
        });
    }

    let scored: Vec<&ForecastRecord> = records.iter().filter(|r| r.actual.is_some()).collect();
    if scored.is_empty() {
        return Err(Error::InsufficientData {
            context: "validation span produced no scorable forecasts".into(),
        });
    }
    let actual: Vec<f64> = scored.iter().map(|r| r.actual.unwrap()).collect();
    let y_hat: Vec<f64> = scored.iter().map(|r| r.forecast.y_hat).collect();
    let variance: Vec<f64> = scored.iter().map(|r| r.forecast.variance).collect();

    let baseline: Vec<(f64, f64)> = scored
        .iter()
        .filter_map(|r| r.naive.map(|b| (r.actual.unwrap(), b)))
        .collect();
    let baseline_rrmse = if baseline.is_empty() {
        None
    } else {
        let (ys, bs): (Vec<f64>, Vec<f64>) = baseline.into_iter().unzip();
        Some(rrmse(&ys, &bs)?)
    };

    let report = EvalReport {
        rrmse: rrmse(&actual, &y_hat)?,
        mae: mae(&actual, &y_hat)?,
        coverage95: coverage(&actual, &y_hat, &variance, 1.96)?,
        n_scored: scored.len(),
        nonzero_params: state.nonzero_params(),
        baseline_rrmse,
    };
    Ok(WalkForwardOutput { report, records, state, fit })
}

/// Aggregate of simultaneous per-consumer forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioForecast {
    /// Shared target hour; `None` for an empty portfolio.
    pub target_time: Option<DateTime<Utc>>,
    pub horizon: Option<usize>,
    /// Sum of per-consumer predictions.
    pub y_tot: f64,
    /// Sum of per-consumer predictive variances (uncorrelated errors).
    pub variance_tot: f64,
    pub per_consumer: Vec<Forecast>,
}

/// Compensated (Kahan) summation; keeps portfolio sums exact to within a
/// couple of ulps regardless of ordering.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Sums simultaneous forecasts across consumers. All inputs must share the
/// same issue time, target time, and horizon; the empty portfolio sums to
/// zero.
pub fn aggregate(forecasts: Vec<Forecast>) -> Result<PortfolioForecast> {
    if let Some(first) = forecasts.first() {
        for f in &forecasts[1..] {
            if f.target_time != first.target_time
                || f.issue_time != first.issue_time
                || f.horizon != first.horizon
            {
                return Err(Error::TimelineMismatch);
            }
        }
    }
    let y_tot = kahan_sum(forecasts.iter().map(|f| f.y_hat));
    let variance_tot = kahan_sum(forecasts.iter().map(|f| f.variance));
    Ok(PortfolioForecast {
        target_time: forecasts.first().map(|f| f.target_time),
        horizon: forecasts.first().map(|f| f.horizon),
        y_tot,
        variance_tot,
        per_consumer: forecasts,
    })
}

/// Aggregates per-consumer forecast sequences position by position; every
/// consumer must supply the same number of forecasts.
pub fn aggregate_horizon(per_consumer: Vec<Vec<Forecast>>) -> Result<Vec<PortfolioForecast>> {
    let Some(len) = per_consumer.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    if per_consumer.iter().any(|f| f.len() != len) {
        return Err(Error::TimelineMismatch);
    }
    (0..len)
        .map(|h| aggregate(per_consumer.iter().map(|f| f[h]).collect()))
        .collect()
}

/// Renders walk-forward records as a plot-ready CSV
/// (`timestamp,actual,y_hat,y_nom,y_res,variance`).
pub fn records_to_csv(records: &[ForecastRecord]) -> String {
    let mut out = String::from("timestamp,actual,y_hat,y_nom,y_res,variance\n");
    for r in records {
        let f = &r.forecast;
        let _ = write!(out, "{},", f.target_time.format("%Y-%m-%dT%H:%M:%SZ"));
        match r.actual {
            Some(a) => {
                let _ = write!(out, "{a}");
            }
            None => {}
        }
        let _ = writeln!(out, ",{},{},{},{}", f.y_hat, f.y_nom, f.y_res, f.variance);
    }
    out
}

/// Writes the records CSV to a file.
pub fn write_records_csv(records: &[ForecastRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{LatentConfig, NominalConfig};
    use crate::timeseries::{HourlySeries, Unit};
    use chrono::TimeZone;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()
    }

    fn null_state(p: usize, k: usize) -> ModelState {
        ModelState::new(p, k, 1.0).unwrap()
    }

    #[test]
    fn predict_is_exact_dot_product_sum() {
        let mut state = null_state(2, 1);
        state.theta = DVector::from_vec(vec![1.0, 2.0]);
        state.z_hat = DVector::from_vec(vec![1.0]);
        state.p_cov[(0, 0)] = 0.0;
        let phi = DVector::from_vec(vec![1.0, 3.0]);
        let gamma = DVector::from_vec(vec![0.5]);
        let (y_nom, y_res, _, _) = predict(&state, &phi, &gamma).unwrap();
        assert_eq!(y_nom + y_res, 7.5);
        assert_eq!(y_nom, 7.0);
        assert_eq!(y_res, 0.5);
    }

    #[test]
    fn null_model_predicts_zero_with_noise_variance() {
        let state = null_state(2, 2);
        let phi = DVector::from_vec(vec![1.0, 4.0]);
        let gamma = DVector::zeros(2);
        let (y_nom, y_res, variance, noise) = predict(&state, &phi, &gamma).unwrap();
        assert_eq!(y_nom + y_res, 0.0);
        assert_eq!(variance, state.sigma2);
        assert_eq!(noise, state.sigma2);
    }

    #[test]
    fn predict_rejects_mismatched_shapes() {
        let state = null_state(2, 1);
        assert!(predict(&state, &DVector::zeros(3), &DVector::zeros(1)).is_err());
    }

    fn flat_dataset(n: usize, temp: f64, load: f64) -> ConsumerDataset {
        let t = HourlySeries::from_values(start(), vec![temp; n], Unit::Celsius).unwrap();
        let l = HourlySeries::from_values(start(), vec![load; n], Unit::Kilowatts).unwrap();
        ConsumerDataset::new("c", l, t).unwrap()
    }

    fn simple_features() -> FeatureConfig {
        FeatureConfig {
            nominal: NominalConfig { threshold_temp: 17.0, lags: 2 },
            latent: LatentConfig::none(),
        }
    }

    #[test]
    fn horizon_one_equals_single_prediction() {
        let dataset = flat_dataset(30, 5.0, 20.0);
        let table = FeatureTable::build(&dataset, &Calendar::utc(), &simple_features()).unwrap();
        let mut state = null_state(4, 0);
        state.theta = DVector::from_vec(vec![2.0, 1.0, 0.0, 0.0]);
        let fs = predict_horizon(&state, &dataset, &table, 10, 1, false).unwrap();
        assert_eq!(fs.len(), 1);
        let row = table.row_for_index(11).unwrap();
        let (y_nom, y_res, _, _) = predict(&state, &row.phi, &row.gamma).unwrap();
        assert_eq!(fs[0].y_hat, y_nom + y_res);
        assert_eq!(fs[0].target_time, dataset.load.timestamp(11));
        assert_eq!(fs[0].horizon, 1);
    }

    #[test]
    fn constant_temperature_gives_constant_nominal_component() {
        let dataset = flat_dataset(60, 5.0, 20.0);
        let table = FeatureTable::build(&dataset, &Calendar::utc(), &simple_features()).unwrap();
        let mut state = null_state(4, 0);
        state.theta = DVector::from_vec(vec![1.0, 0.5, 0.25, 0.125]);
        let fs = predict_horizon(&state, &dataset, &table, 10, 24, false).unwrap();
        let first = fs[0].y_nom;
        assert!(fs.iter().all(|f| (f.y_nom - first).abs() < 1e-12));
    }

    #[test]
    fn horizon_past_data_end_is_missing_temperature() {
        let dataset = flat_dataset(30, 5.0, 20.0);
        let table = FeatureTable::build(&dataset, &Calendar::utc(), &simple_features()).unwrap();
        let state = null_state(4, 0);
        assert!(matches!(
            predict_horizon(&state, &dataset, &table, 28, 24, false),
            Err(Error::MissingTemperature { .. })
        ));
    }

    #[test]
    fn walk_forward_is_exact_on_realizable_data() {
        // y = 10 + 2 * dT(t), dT varying, no latent signal, no noise.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 500;
        let temps: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..15.0)).collect();
        let loads: Vec<f64> = temps.iter().map(|t| 10.0 + 2.0 * (17.0 - t).max(0.0)).collect();
        let t = HourlySeries::from_values(start(), temps, Unit::Celsius).unwrap();
        let l = HourlySeries::from_values(start(), loads, Unit::Kilowatts).unwrap();
        let dataset = ConsumerDataset::new("c", l, t).unwrap();
        let opts = WalkForwardOptions {
            split: dataset.load.timestamp(300),
            horizon: 24,
            clamp_non_negative: false,
            lambda: 1.0,
        };
        let out = walk_forward(
            &dataset,
            &Calendar::utc(),
            &simple_features(),
            &EmOptions::default(),
            &opts,
        )
        .unwrap();
        // The estimator's ridge jitter biases theta by a few parts in 1e7,
        // so "exact" means down at that level rather than machine epsilon.
        assert!(out.report.rrmse < 1e-4, "rrmse = {}", out.report.rrmse);
        assert_eq!(out.report.n_scored, 500 - 300 - 24);
        // Forecast decomposition identity holds for every record.
        for r in &out.records {
            assert_eq!(r.forecast.y_hat, r.forecast.y_nom + r.forecast.y_res);
        }
        // No-leakage bookkeeping: every forecast was issued H hours early.
        for r in &out.records {
            let dt = r.forecast.target_time - r.forecast.issue_time;
            assert_eq!(dt.num_hours(), 24);
        }
    }

    #[test]
    fn walk_forward_beats_mean_on_temperature_driven_data() {
        // Sanity floor: the model must beat predicting the validation mean
        // (rRMSE equal to the coefficient of variation).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 600;
        let temps: Vec<f64> = (0..n)
            .map(|i| 5.0 + 10.0 * (i as f64 / 50.0).sin() + rng.gen_range(-1.0..1.0))
            .collect();
        let loads: Vec<f64> = temps
            .iter()
            .map(|t| 15.0 + 3.0 * (17.0 - t).max(0.0) + rng.gen_range(-0.5..0.5))
            .collect();
        let t = HourlySeries::from_values(start(), temps, Unit::Celsius).unwrap();
        let l = HourlySeries::from_values(start(), loads.clone(), Unit::Kilowatts).unwrap();
        let dataset = ConsumerDataset::new("c", l, t).unwrap();
        let opts = WalkForwardOptions {
            split: dataset.load.timestamp(400),
            horizon: 24,
            clamp_non_negative: false,
            lambda: 1.0,
        };
        let out = walk_forward(
            &dataset,
            &Calendar::utc(),
            &simple_features(),
            &EmOptions::default(),
            &opts,
        )
        .unwrap();

        let scored: Vec<f64> = out.records.iter().filter_map(|r| r.actual).collect();
        let mean = scored.iter().sum::<f64>() / scored.len() as f64;
        let cv = (scored.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>()
            / scored.len() as f64)
            .sqrt()
            / mean;
        assert!(out.report.rrmse < cv, "rrmse {} vs cv {}", out.report.rrmse, cv);
    }

    #[test]
    fn aggregate_sums_means_and_variances() {
        let f = |y: f64, v: f64| Forecast {
            issue_time: start(),
            target_time: start() + chrono::Duration::hours(24),
            horizon: 24,
            y_hat: y,
            y_nom: y,
            y_res: 0.0,
            variance: v,
            noise_variance: v,
        };
        let p = aggregate(vec![f(3.0, 1.0), f(4.0, 2.0)]).unwrap();
        assert_eq!(p.y_tot, 7.0);
        assert_eq!(p.variance_tot, 3.0);

        let single = aggregate(vec![f(5.0, 0.5)]).unwrap();
        assert_eq!(single.y_tot, 5.0);
        assert_eq!(single.variance_tot, 0.5);

        let empty = aggregate(Vec::new()).unwrap();
        assert_eq!(empty.y_tot, 0.0);
        assert_eq!(empty.variance_tot, 0.0);
        assert!(empty.target_time.is_none());
    }

    #[test]
    fn aggregate_rejects_mixed_targets() {
        let mk = |h: i64| Forecast {
            issue_time: start(),
            target_time: start() + chrono::Duration::hours(h),
            horizon: 24,
            y_hat: 1.0,
            y_nom: 1.0,
            y_res: 0.0,
            variance: 1.0,
            noise_variance: 1.0,
        };
        assert!(matches!(
            aggregate(vec![mk(24), mk(25)]),
            Err(Error::TimelineMismatch)
        ));
    }

    #[test]
    fn records_csv_has_expected_shape() {
        let record = ForecastRecord {
            forecast: Forecast {
                issue_time: start(),
                target_time: start() + chrono::Duration::hours(24),
                horizon: 24,
                y_hat: 2.5,
                y_nom: 2.0,
                y_res: 0.5,
                variance: 0.25,
                noise_variance: 0.2,
            },
            actual: Some(2.75),
            naive: None,
        };
        let csv = records_to_csv(&[record]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "timestamp,actual,y_hat,y_nom,y_res,variance");
        assert_eq!(lines.next().unwrap(), "2019-01-02T00:00:00Z,2.75,2.5,2,0.5,0.25");
    }
}
