//! Operating schedules: heating setpoint, ventilation, internal gains, and
//! tap-water demand as functions of the clock.
//!
//! All schedules read the UTC clock directly; the synthetic district is
//! defined in UTC so simulated behavior lines up with the calendar
//! covariates the estimator sees.

use chrono::{DateTime, Datelike, Timelike, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the building operates its ventilation and setpoint over the week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VentilationPattern {
    /// Ventilation and setpoint constant around the clock.
    Continuous,
    /// Setpoint lowered overnight (22:00–06:00); ventilation constant.
    NightSetback,
    /// Ventilation on 06:00–18:00 Monday through Friday, reduced otherwise.
    Timeclock5d,
    /// Ventilation on 06:00–18:00 every day, reduced otherwise.
    Timeclock7d,
}

/// Schedule shape and magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    pub pattern: VentilationPattern,
    /// Ventilation heat-loss conductance when running, W/K.
    pub vent_conductance_w_per_k: f64,
    /// Fraction of the conductance that remains when the timeclock is off.
    pub vent_off_fraction: f64,
    /// Setpoint reduction during night setback, degrees C.
    pub setback_delta_c: f64,
    /// Internal gains floor (appliances, standby), W.
    pub q_int_base_w: f64,
    /// Additional gains while occupied, W.
    pub q_int_occupied_w: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            pattern: VentilationPattern::Continuous,
            vent_conductance_w_per_k: 150.0,
            vent_off_fraction: 0.2,
            setback_delta_c: 2.0,
            q_int_base_w: 500.0,
            q_int_occupied_w: 1500.0,
        }
    }
}

fn in_window(hour: u32, from: u32, to: u32) -> bool {
    if from <= to {
        (from..to).contains(&hour)
    } else {
        hour >= from || hour < to
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if self.vent_conductance_w_per_k < 0.0
            || !(0.0..=1.0).contains(&self.vent_off_fraction)
            || self.setback_delta_c < 0.0
            || self.q_int_base_w < 0.0
            || self.q_int_occupied_w < 0.0
        {
            return Err(Error::InvalidConfig {
                message: "schedule parameters must be non-negative (off fraction in [0, 1])".into(),
            });
        }
        Ok(())
    }

    /// Whether people are around: drives internal gains and, for timeclock
    /// patterns, the ventilation plant.
    pub fn occupied(&self, ts: DateTime<Utc>) -> bool {
        let hour = ts.hour();
        match self.pattern {
            VentilationPattern::Continuous | VentilationPattern::NightSetback => {
                in_window(hour, 6, 22)
            }
            VentilationPattern::Timeclock5d => {
                ts.weekday().num_days_from_monday() < 5 && in_window(hour, 6, 18)
            }
            VentilationPattern::Timeclock7d => in_window(hour, 6, 18),
        }
    }

    /// Heating setpoint at this hour, given the building's base setpoint.
    pub fn setpoint(&self, base_c: f64, ts: DateTime<Utc>) -> f64 {
        match self.pattern {
            VentilationPattern::NightSetback if in_window(ts.hour(), 22, 6) => {
                base_c - self.setback_delta_c
            }
            _ => base_c,
        }
    }

    /// Effective ventilation conductance at this hour, W/K.
    pub fn ventilation(&self, ts: DateTime<Utc>) -> f64 {
        match self.pattern {
            VentilationPattern::Continuous | VentilationPattern::NightSetback => {
                self.vent_conductance_w_per_k
            }
            VentilationPattern::Timeclock5d | VentilationPattern::Timeclock7d => {
                if self.occupied(ts) {
                    self.vent_conductance_w_per_k
                } else {
                    self.vent_conductance_w_per_k * self.vent_off_fraction
                }
            }
        }
    }

    /// Internal heat gains at this hour, W.
    pub fn internal_gains(&self, ts: DateTime<Utc>) -> f64 {
        if self.occupied(ts) {
            self.q_int_base_w + self.q_int_occupied_w
        } else {
            self.q_int_base_w
        }
    }
}

/// Domestic hot-water demand: a two-peak daily intensity profile scaled by
/// mean-one multiplicative lognormal noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapWaterParams {
    /// Long-run average demand, W.
    pub mean_w: f64,
    /// Center of the morning peak, hour of day.
    pub morning_peak_hour: f64,
    /// Center of the evening peak, hour of day.
    pub evening_peak_hour: f64,
    /// Width (std dev, hours) of both peaks.
    pub peak_width_hours: f64,
    /// Intensity floor between peaks, relative to peak height.
    pub base_level: f64,
    /// Hours by which both peaks move later on weekends.
    pub weekend_shift_hours: f64,
    /// Sigma of the mean-one lognormal draw noise; 0 disables noise.
    pub noise_sigma: f64,
}

impl Default for TapWaterParams {
    fn default() -> Self {
        Self {
            mean_w: 4000.0,
            morning_peak_hour: 7.0,
            evening_peak_hour: 19.0,
            peak_width_hours: 1.5,
            base_level: 0.25,
            weekend_shift_hours: 2.0,
            noise_sigma: 0.4,
        }
    }
}

impl TapWaterParams {
    pub fn validate(&self) -> Result<()> {
        if self.mean_w < 0.0 || self.peak_width_hours <= 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig {
                message: "tap water mean and noise must be non-negative, peak width positive"
                    .into(),
            });
        }
        Ok(())
    }

    fn raw_intensity(&self, hour: f64, weekend: bool) -> f64 {
        let shift = if weekend { self.weekend_shift_hours } else { 0.0 };
        let peak = |center: f64| {
            // Wrap the distance so late-evening peaks spill into the early
            // morning instead of vanishing at midnight.
            let mut d = (hour - center - shift).abs() % 24.0;
            if d > 12.0 {
                d = 24.0 - d;
            }
            (-0.5 * (d / self.peak_width_hours).powi(2)).exp()
        };
        self.base_level + peak(self.morning_peak_hour) + peak(self.evening_peak_hour)
    }

    /// Intensity at an integer hour, normalized so the daily mean is one.
    pub fn intensity(&self, hour: u32, weekend: bool) -> f64 {
        let total: f64 = (0..24).map(|h| self.raw_intensity(h as f64, weekend)).sum();
        self.raw_intensity(hour as f64, weekend) * 24.0 / total
    }

    /// Draws the demand for one hour, W.
    pub fn draw<R: Rng>(&self, ts: DateTime<Utc>, rng: &mut R) -> f64 {
        let weekend = ts.weekday().num_days_from_monday() >= 5;
        let shape = self.intensity(ts.hour(), weekend);
        let noise = if self.noise_sigma > 0.0 {
            let xi: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
            (self.noise_sigma * xi - 0.5 * self.noise_sigma * self.noise_sigma).exp()
        } else {
            1.0
        };
        self.mean_w * shape * noise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn at(day: u32, hour: u32) -> DateTime<Utc> {
        // January 2019: the 7th is a Monday.
        Utc.with_ymd_and_hms(2019, 1, day, hour, 0, 0).unwrap()
    }

    #[test]
    fn night_setback_lowers_setpoint_overnight_only() {
        let s = ScheduleParams { pattern: VentilationPattern::NightSetback, ..Default::default() };
        assert_eq!(s.setpoint(21.0, at(7, 23)), 19.0);
        assert_eq!(s.setpoint(21.0, at(7, 3)), 19.0);
        assert_eq!(s.setpoint(21.0, at(7, 6)), 21.0);
        assert_eq!(s.setpoint(21.0, at(7, 12)), 21.0);
        // Other patterns never touch the setpoint.
        let c = ScheduleParams::default();
        assert_eq!(c.setpoint(21.0, at(7, 23)), 21.0);
    }

    #[test]
    fn timeclock_5d_runs_weekday_business_hours() {
        let s = ScheduleParams { pattern: VentilationPattern::Timeclock5d, ..Default::default() };
        let full = s.vent_conductance_w_per_k;
        let off = full * s.vent_off_fraction;
        assert_eq!(s.ventilation(at(7, 12)), full); // Monday noon
        assert_eq!(s.ventilation(at(7, 5)), off); // Monday early morning
        assert_eq!(s.ventilation(at(7, 18)), off); // Monday evening
        assert_eq!(s.ventilation(at(12, 12)), off); // Saturday noon
        let s7 = ScheduleParams { pattern: VentilationPattern::Timeclock7d, ..s };
        assert_eq!(s7.ventilation(at(12, 12)), full); // Saturday noon runs on 7d
    }

    #[test]
    fn continuous_ventilation_never_drops() {
        let s = ScheduleParams::default();
        for hour in 0..24 {
            assert_eq!(s.ventilation(at(12, hour)), s.vent_conductance_w_per_k);
        }
    }

    #[test]
    fn gains_rise_while_occupied() {
        let s = ScheduleParams::default();
        assert_eq!(s.internal_gains(at(7, 12)), 2000.0);
        assert_eq!(s.internal_gains(at(7, 3)), 500.0);
    }

    #[test]
    fn tap_water_intensity_averages_to_one() {
        let p = TapWaterParams::default();
        for weekend in [false, true] {
            let mean: f64 = (0..24).map(|h| p.intensity(h, weekend)).sum::<f64>() / 24.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tap_water_peaks_shift_later_on_weekends() {
        let p = TapWaterParams::default();
        // Weekdays peak at 07:00; the weekend profile moves that peak to
        // 09:00 and correspondingly thins out 07:00.
        assert!(p.intensity(7, false) > 1.5 * p.intensity(9, false));
        assert!(p.intensity(9, true) > 1.5 * p.intensity(7, true));
        assert!((p.intensity(9, true) - p.intensity(7, false)).abs() < 1e-9);
    }

    #[test]
    fn zero_mean_tap_water_is_identically_zero() {
        let p = TapWaterParams { mean_w: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.draw(at(7, 7), &mut rng), 0.0);
    }

    #[test]
    fn noiseless_draws_are_deterministic_profile_values() {
        let p = TapWaterParams { noise_sigma: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.draw(at(7, 7), &mut rng);
        let b = p.draw(at(8, 7), &mut rng); // Tuesday, same hour
        assert_eq!(a, b);
        assert_eq!(a, p.mean_w * p.intensity(7, false));
    }

    #[test]
    fn lognormal_noise_keeps_the_long_run_mean() {
        let p = TapWaterParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 20_000;
        let ts = at(7, 7); // fixed hour: expectation is mean_w * intensity
        let mean: f64 = (0..n).map(|_| p.draw(ts, &mut rng)).sum::<f64>() / n as f64;
        let expected = p.mean_w * p.intensity(7, false);
        assert!((mean / expected - 1.0).abs() < 0.03, "mean {mean}, expected {expected}");
    }
}
