//! Declarative run configuration.
//!
//! One TOML document describes a whole run — data sources, feature recipe,
//! estimator options, evaluation window, simulator setup, and output paths.
//! Command-line flags override individual keys one-to-one; unknown keys are
//! rejected everywhere so a typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Deserialize;

use heatcast::estimator::EmOptions;
use heatcast::features::{
    BinaryInput, FeatureConfig, LatentConfig, NominalConfig, PeriodicInput, PeriodicTerm,
};
use heatcast::sim::{PortfolioParams, SimConfig};

use crate::error::{CliError, CliResult};

/// The whole parsed configuration document.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<DataSection>,
    pub features: FeaturesSection,
    pub estimator: EstimatorSection,
    pub evaluation: Option<EvaluationSection>,
    pub simulate: Option<SimConfig>,
    pub portfolio: Option<PortfolioParams>,
    pub aggregate: Option<AggregateSection>,
    pub output: OutputSection,
}

/// Where the consumer's measurements live and how to interpret their clock.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `timestamp,value` CSV of hourly heat loads in kW.
    pub load_csv: PathBuf,
    /// `timestamp,value` CSV of hourly outdoor temperatures in degC.
    pub temperature_csv: PathBuf,
    #[serde(default = "default_consumer_id")]
    pub consumer_id: String,
    /// IANA zone name for calendar covariates (weekday, holiday, season).
    #[serde(default = "default_time_zone")]
    pub time_zone: String,
    /// Optional file with one `YYYY-MM-DD` holiday per line.
    #[serde(default)]
    pub holiday_file: Option<PathBuf>,
    /// Longest run of missing hours bridged by linear interpolation.
    #[serde(default = "default_max_interp_hours")]
    pub max_interp_hours: usize,
}

fn default_consumer_id() -> String {
    "consumer".into()
}

fn default_time_zone() -> String {
    "UTC".into()
}

fn default_max_interp_hours() -> usize {
    6
}

/// Regressor recipe: the lagged heating-degree block and the periodic
/// calendar block.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    /// Heating threshold temperature in degC.
    pub threshold_temp: f64,
    /// Hourly lags of the heating-degree regressor.
    pub lags: usize,
    /// Harmonics per periodic input.
    pub harmonics: usize,
    /// Periodic calendar inputs, in order.
    pub periodic: Vec<PeriodicInput>,
    /// Binary calendar selectors, in order.
    pub binary: Vec<BinaryInput>,
    /// Basis boundary overrides keyed by periodic input name; inputs not
    /// listed use their quarter-period boundary.
    pub boundaries: BTreeMap<String, f64>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            threshold_temp: 17.0,
            lags: 24,
            harmonics: 8,
            periodic: vec![
                PeriodicInput::TimeOfDay,
                PeriodicInput::DayOfWeek,
                PeriodicInput::WeekOfYear,
            ],
            binary: vec![BinaryInput::Weekend, BinaryInput::Summer],
            boundaries: BTreeMap::new(),
        }
    }
}

fn periodic_key(input: PeriodicInput) -> &'static str {
    match input {
        PeriodicInput::TimeOfDay => "time_of_day",
        PeriodicInput::DayOfWeek => "day_of_week",
        PeriodicInput::WeekOfYear => "week_of_year",
    }
}

impl FeaturesSection {
    /// Translates the section into the library's feature configuration,
    /// applying boundary overrides and rejecting overrides that name an
    /// input not in the periodic list.
    pub fn to_feature_config(&self) -> CliResult<FeatureConfig> {
        let mut periodic = Vec::with_capacity(self.periodic.len());
        for &input in &self.periodic {
            let mut term = PeriodicTerm::quarter_period(input);
            if let Some(&boundary) = self.boundaries.get(periodic_key(input)) {
                term.boundary = boundary;
            }
            periodic.push(term);
        }
        for key in self.boundaries.keys() {
            if !self.periodic.iter().any(|&p| periodic_key(p) == key) {
                return Err(CliError::Config(format!(
                    "boundary override `{key}` does not match any configured periodic input"
                )));
            }
        }
        let cfg = FeatureConfig {
            nominal: NominalConfig {
                threshold_temp: self.threshold_temp,
                lags: self.lags,
            },
            latent: LatentConfig {
                harmonics: self.harmonics,
                periodic,
                binary: self.binary.clone(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// EM iteration controls plus the forgetting factor.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Forgetting factor for the streaming statistics (1 = no forgetting).
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub prune_tol: f64,
    pub evidence_tol: f64,
    pub iters_per_sample: usize,
    pub ridge_jitter: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let em = EmOptions::default();
        Self {
            lambda: 1.0,
            max_iters: em.max_iters,
            rel_tol: em.rel_tol,
            prune_tol: em.prune_tol,
            evidence_tol: em.evidence_tol,
            iters_per_sample: em.iters_per_sample,
            ridge_jitter: em.ridge_jitter,
        }
    }
}

impl EstimatorSection {
    pub fn em_options(&self) -> CliResult<EmOptions> {
        let em = EmOptions {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            prune_tol: self.prune_tol,
            evidence_tol: self.evidence_tol,
            iters_per_sample: self.iters_per_sample,
            ridge_jitter: self.ridge_jitter,
        };
        em.validate()?;
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(CliError::Config(format!(
                "estimator lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(em)
    }
}

/// Walk-forward evaluation window.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Training/validation boundary (quoted RFC 3339 timestamp).
    pub split: DateTime<Utc>,
    /// Forecast lead time in hours.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Clamp point predictions at zero.
    #[serde(default)]
    pub clamp_non_negative: bool,
}

pub fn default_horizon() -> usize {
    24
}

/// Consumers joining a portfolio aggregation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSection {
    pub consumers: Vec<AggregateConsumer>,
    /// Shared IANA zone for calendar covariates.
    #[serde(default = "default_time_zone")]
    pub time_zone: String,
    #[serde(default)]
    pub holiday_file: Option<PathBuf>,
}

/// One trained consumer: its state file and measurement CSVs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateConsumer {
    pub state: PathBuf,
    pub load_csv: PathBuf,
    pub temperature_csv: PathBuf,
}

/// Where command outputs land.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from(".") }
    }
}

/// Reads and parses the configuration document. Any problem here — missing
/// file, TOML syntax, unknown keys — is a configuration error.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses a command-line timestamp: RFC 3339, or a naive
/// `YYYY-MM-DDTHH:MM[:SS]` taken as UTC.
pub fn parse_utc(s: &str) -> CliResult<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc());
        }
    }
    Err(CliError::Config(format!("unparseable timestamp `{s}`")))
}
