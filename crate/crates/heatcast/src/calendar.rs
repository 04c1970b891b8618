//! Calendar covariates derived from local civil time.
//!
//! Timestamps are stored in UTC everywhere; only this module converts to a
//! configured IANA time zone so that hour-of-day, weekday, weekend and summer
//! flags follow occupant clock time (including DST shifts).

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Timelike, Utc};
use chrono_tz::Tz;

use crate::error::{Error, Result};

/// Deterministic calendar features for one timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarCovariates {
    /// Hour of day in local time, `[0, 24)`.
    pub hour_of_day: f64,
    /// Day of week in local time, Monday = 0, `[0, 7)`.
    pub day_of_week: f64,
    /// ISO week of year, clamped to `[1, 53]`.
    pub week_of_year: f64,
    /// `true` on Saturdays, Sundays, and configured holidays.
    pub weekend: bool,
    /// `true` during May through August.
    pub summer: bool,
}

/// Time-zone plus holiday configuration used to compute covariates.
#[derive(Debug, Clone)]
pub struct Calendar {
    tz: Tz,
    holidays: BTreeSet<NaiveDate>,
}

impl Calendar {
    /// Calendar for the given zone with no holidays configured.
    pub fn new(tz: Tz) -> Self {
        Self { tz, holidays: BTreeSet::new() }
    }

    /// Calendar in UTC with no holidays; the default for synthetic data.
    pub fn utc() -> Self {
        Self::new(chrono_tz::UTC)
    }

    /// Looks up an IANA zone name (for example `Europe/Stockholm`).
    pub fn from_zone_name(name: &str) -> Result<Self> {
        let tz = Tz::from_str(name).map_err(|_| Error::InvalidConfig {
            message: format!("unknown IANA time zone `{name}`"),
        })?;
        Ok(Self::new(tz))
    }

    /// Adds holiday dates (local civil dates).
    pub fn with_holidays(mut self, dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        self.holidays.extend(dates);
        self
    }

    /// Loads holidays from a file with one `YYYY-MM-DD` per line. Blank lines
    /// and text after `#` are ignored.
    pub fn load_holiday_file(mut self, path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (no, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: no + 1,
                message: format!("unparseable holiday date `{line}`"),
            })?;
            self.holidays.insert(date);
        }
        Ok(self)
    }

    /// Number of configured holiday dates.
    pub fn holiday_count(&self) -> usize {
        self.holidays.len()
    }

    /// Computes the covariates for a UTC timestamp.
    pub fn covariates(&self, ts: DateTime<Utc>) -> CalendarCovariates {
        let local = self.tz.from_utc_datetime(&ts.naive_utc());
        let date = local.date_naive();
        let weekday = local.weekday().num_days_from_monday(); // Monday = 0
        let week = local.iso_week().week().min(53);
        let month = local.month();
        CalendarCovariates {
            hour_of_day: local.hour() as f64,
            day_of_week: weekday as f64,
            week_of_year: week as f64,
            weekend: weekday >= 5 || self.holidays.contains(&date),
            summer: (5..=8).contains(&month),
        }
    }
}
