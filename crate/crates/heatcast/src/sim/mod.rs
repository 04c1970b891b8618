//! Synthetic district-heating consumer simulator.
//!
//! Produces hourly (load, outdoor temperature) datasets with known ground
//! truth for testing the estimator: a weather generator drives a
//! lumped-capacitance building under a scheduled controller, tap-water
//! demand is added on top, and the metered load is quantized to the meter's
//! dead band. Everything is deterministic per seed.

mod building;
mod schedule;
mod weather;

pub use building::BuildingParams;
pub use schedule::{ScheduleParams, TapWaterParams, VentilationPattern};
pub use weather::{generate_weather, WeatherParams};

use building::{advance_hour, BuildingState, HourInputs, DIVERGENCE_LIMIT_C};
use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{ConsumerDataset, HourlySeries, Unit};

/// Full description of one simulated consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub consumer_id: String,
    pub start: DateTime<Utc>,
    pub hours: usize,
    /// Integrator substep in seconds; must divide 3600.
    #[serde(default = "default_substep")]
    pub substep_secs: u32,
    /// Meter resolution in kW; 0 records exact loads.
    #[serde(default)]
    pub dead_band_kw: f64,
    pub seed: u64,
    #[serde(default)]
    pub weather: WeatherParams,
    #[serde(default)]
    pub building: BuildingParams,
    #[serde(default)]
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub tap_water: TapWaterParams,
}

fn default_substep() -> u32 {
    60
}

impl SimConfig {
    /// A config with default physics; callers override fields as needed.
    pub fn new(consumer_id: &str, start: DateTime<Utc>, hours: usize, seed: u64) -> Self {
        Self {
            consumer_id: consumer_id.to_string(),
            start,
            hours,
            substep_secs: default_substep(),
            dead_band_kw: 0.0,
            seed,
            weather: WeatherParams::default(),
            building: BuildingParams::default(),
            schedule: ScheduleParams::default(),
            tap_water: TapWaterParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hours == 0 {
            return Err(Error::InvalidConfig { message: "simulation needs hours >= 1".into() });
        }
        if self.substep_secs == 0 || 3600 % self.substep_secs != 0 {
            return Err(Error::InvalidConfig {
                message: format!("substep_secs must divide 3600, got {}", self.substep_secs),
            });
        }
        if self.dead_band_kw < 0.0 {
            return Err(Error::InvalidConfig {
                message: "dead_band_kw must be non-negative".into(),
            });
        }
        self.weather.validate()?;
        self.building.validate()?;
        self.schedule.validate()?;
        self.tap_water.validate()
    }
}

/// Unquantized per-hour ground truth alongside the metered dataset.
/// Heat flows are hourly means in kW; `t_b_c` is the end-of-hour indoor
/// temperature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthSeries {
    pub q_sh_kw: Vec<f64>,
    pub q_tw_kw: Vec<f64>,
    pub q_v_kw: Vec<f64>,
    pub q_int_kw: Vec<f64>,
    pub q_out_kw: Vec<f64>,
    pub t_b_c: Vec<f64>,
}

/// Result of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub dataset: ConsumerDataset,
    pub truth: TruthSeries,
}

/// Simulates one consumer, generating its own weather from the seed.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let temps = generate_weather(config.start, config.hours, &config.weather, &mut rng)?;
    simulate_with_weather(config, &temps)
}

/// Simulates one consumer against a given temperature trace (used to share
/// one district's weather across a portfolio).
pub fn simulate_with_weather(config: &SimConfig, temps: &[f64]) -> Result<SimOutput> {
    config.validate()?;
    if temps.len() < config.hours {
        return Err(Error::InvalidConfig {
            message: format!(
                "weather trace holds {} hours, simulation needs {}",
                temps.len(),
                config.hours
            ),
        });
    }
    // Tap water draws on a dedicated RNG stream so changing the weather
    // noise never perturbs the demand sequence.
    let mut tap_rng = ChaCha8Rng::seed_from_u64(config.seed);
    tap_rng.set_stream(1);

    let mut st = BuildingState::new(config.building.t_r_c);
    let mut truth = TruthSeries::default();
    let mut loads = Vec::with_capacity(config.hours);
    for i in 0..config.hours {
        let ts = config.start + Duration::hours(i as i64);
        let inputs = HourInputs {
            t_o: temps[i],
            t_set: config.schedule.setpoint(config.building.t_r_c, ts),
            g_v: config.schedule.ventilation(ts),
            q_int: config.schedule.internal_gains(ts),
        };
        let flows = advance_hour(&config.building, &mut st, &inputs, config.substep_secs)
            .ok_or(Error::UnstableSimulation {
                hour: i,
                limit: DIVERGENCE_LIMIT_C,
                suggested_substep_secs: (config.substep_secs / 10).max(1),
            })?;
        let q_tw = config.tap_water.draw(ts, &mut tap_rng);
        let mut y_kw = (flows.q_sh_mean + q_tw) / 1000.0;
        if config.dead_band_kw > 0.0 {
            y_kw = (y_kw / config.dead_band_kw).round() * config.dead_band_kw;
        }
        loads.push(y_kw);
        truth.q_sh_kw.push(flows.q_sh_mean / 1000.0);
        truth.q_tw_kw.push(q_tw / 1000.0);
        truth.q_v_kw.push(flows.q_v_mean / 1000.0);
        truth.q_int_kw.push(flows.q_int / 1000.0);
        truth.q_out_kw.push(flows.q_out_mean / 1000.0);
        truth.t_b_c.push(flows.t_b_end);
    }

    let load = HourlySeries::from_values(config.start, loads, Unit::Kilowatts)?;
    let temperature =
        HourlySeries::from_values(config.start, temps[..config.hours].to_vec(), Unit::Celsius)?;
    let dataset = ConsumerDataset::new(&config.consumer_id, load, temperature)?;
    Ok(SimOutput { dataset, truth })
}

/// Shape of a randomized portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioParams {
    pub n_consumers: usize,
    /// Building size multiplier range; scales capacitance, conductances,
    /// capacity, gains, and tap-water demand together.
    #[serde(default = "default_scale_range")]
    pub scale_range: (f64, f64),
    /// Patterns assigned round-robin across consumers.
    #[serde(default = "default_patterns")]
    pub patterns: Vec<VentilationPattern>,
}

fn default_scale_range() -> (f64, f64) {
    (0.5, 2.0)
}

fn default_patterns() -> Vec<VentilationPattern> {
    vec![
        VentilationPattern::Continuous,
        VentilationPattern::NightSetback,
        VentilationPattern::Timeclock5d,
        VentilationPattern::Timeclock7d,
    ]
}

impl PortfolioParams {
    pub fn new(n_consumers: usize) -> Self {
        Self { n_consumers, scale_range: default_scale_range(), patterns: default_patterns() }
    }
}

/// Simulates a district of consumers sharing one weather trace. Building
/// sizes and schedules vary per consumer; each consumer's randomness is an
/// independent, reproducible function of the base seed.
pub fn generate_portfolio(base: &SimConfig, portfolio: &PortfolioParams) -> Result<Vec<SimOutput>> {
    base.validate()?;
    if portfolio.n_consumers == 0 || portfolio.patterns.is_empty() {
        return Err(Error::InvalidConfig {
            message: "portfolio needs at least one consumer and one pattern".into(),
        });
    }
    let (lo, hi) = portfolio.scale_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidConfig {
            message: format!("scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let temps = generate_weather(base.start, base.hours, &base.weather, &mut rng)?;

    let configs: Vec<SimConfig> = (0..portfolio.n_consumers)
        .map(|i| {
            let mut draw = ChaCha8Rng::seed_from_u64(base.seed);
            draw.set_stream(1000 + i as u64);
            let scale = draw.gen_range(lo..=hi);
            let mut cfg = base.clone();
            cfg.consumer_id = format!("{}-{:03}", base.consumer_id, i);
            cfg.seed = base.seed.wrapping_add(i as u64 + 1);
            cfg.schedule.pattern = portfolio.patterns[i % portfolio.patterns.len()];
            cfg.building.c_th_j_per_k *= scale;
            cfg.building.k_a_w_per_k *= scale;
            cfg.building.k_ff_w_per_k *= scale;
            cfg.building.q_max_w *= scale;
            cfg.building.k_p *= scale;
            cfg.building.k_i *= scale;
            cfg.schedule.vent_conductance_w_per_k *= scale;
            cfg.schedule.q_int_base_w *= scale;
            cfg.schedule.q_int_occupied_w *= scale;
            cfg.tap_water.mean_w *= scale;
            cfg
        })
        .collect();

    configs.par_iter().map(|cfg| simulate_with_weather(cfg, &temps)).collect()
}
