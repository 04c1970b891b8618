//! Hourly series storage, CSV ingestion/export, gap filling, and alignment.
//!
//! A series is stored as a start hour plus a dense vector of
//! `(value, quality)` entries, one per hour, so the "consecutive entries are
//! exactly one hour apart" invariant holds by construction. Hours that were
//! absent from the input are materialized as `Missing` placeholders; short
//! gaps can later be filled by linear interpolation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};

use crate::error::{Error, Result};

/// Provenance of a single hourly value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Quality {
    /// Came directly from an input row.
    Observed,
    /// Filled by linear interpolation across a short gap.
    Interpolated,
    /// No usable value for this hour; the stored number is a placeholder.
    Missing,
}

/// Physical unit tag for a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Unit {
    /// Heat load in kilowatts.
    Kilowatts,
    /// Temperature in degrees Celsius.
    Celsius,
}

/// What a CSV file contains; determines the unit tag of the ingested series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Load,
    Temperature,
}

impl SeriesKind {
    fn unit(self) -> Unit {
        match self {
            SeriesKind::Load => Unit::Kilowatts,
            SeriesKind::Temperature => Unit::Celsius,
        }
    }
}

/// A gap-annotated hourly series anchored at a UTC top-of-hour timestamp.
#[derive(Debug, Clone)]
pub struct HourlySeries {
    start: DateTime<Utc>,
    values: Vec<(f64, Quality)>,
    unit: Unit,
}

impl HourlySeries {
    /// Builds a series from explicit entries. `start` must be a top-of-hour
    /// UTC timestamp; entry `i` describes the hour `start + i h`.
    pub fn new(start: DateTime<Utc>, values: Vec<(f64, Quality)>, unit: Unit) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::InvalidConfig {
                message: format!("series start {start} is not a top-of-hour timestamp"),
            });
        }
        Ok(Self { start, values, unit })
    }

    /// Builds an all-`Observed` series from raw values (simulator output).
    pub fn from_values(start: DateTime<Utc>, values: Vec<f64>, unit: Unit) -> Result<Self> {
        let values = values.into_iter().map(|v| (v, Quality::Observed)).collect();
        Self::new(start, values, unit)
    }

    /// First hour covered by the series.
    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Number of hours covered.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// `true` when the series covers no hours.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Unit tag.
    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Timestamp of entry `idx`.
    pub fn timestamp(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::hours(idx as i64)
    }

    /// Value of entry `idx` (placeholder NaN when the entry is `Missing`).
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx].0
    }

    /// Quality flag of entry `idx`.
    pub fn quality(&self, idx: usize) -> Quality {
        self.values[idx].1
    }

    /// `true` when entry `idx` may participate in model updates.
    pub fn is_usable(&self, idx: usize) -> bool {
        self.values[idx].1 != Quality::Missing
    }

    /// Index of `ts` within the series, if covered.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let delta = ts.signed_duration_since(self.start);
        if delta.num_seconds() < 0 || delta.num_seconds() % 3600 != 0 {
            return None;
        }
        let idx = (delta.num_seconds() / 3600) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    /// Iterates `(timestamp, value, quality)` in time order.
    pub fn iter(&self) -> impl Iterator<Item = (DateTime<Utc>, f64, Quality)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &(v, q))| (self.timestamp(i), v, q))
    }

    /// Sub-series covering entries `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> HourlySeries {
        HourlySeries {
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
            unit: self.unit,
        }
    }

    /// Returns a copy with every gap of at most `max_interp_hours` consecutive
    /// missing entries replaced by linear interpolation between its observed
    /// neighbours (marked `Interpolated`). Longer gaps and gaps touching the
    /// series boundary are left as `Missing`.
    pub fn fill_gaps(&self, max_interp_hours: usize) -> HourlySeries {
        let mut out = self.clone();
        let n = out.values.len();
        let mut i = 0;
        while i < n {
            if out.values[i].1 != Quality::Missing {
                i += 1;
                continue;
            }
            let gap_start = i;
            while i < n && out.values[i].1 == Quality::Missing {
                i += 1;
            }
            let gap_len = i - gap_start;
            let has_left = gap_start > 0;
            let has_right = i < n;
            if has_left && has_right && gap_len <= max_interp_hours {
                let left = out.values[gap_start - 1].0;
                let right = out.values[i].0;
                for k in 0..gap_len {
                    let frac = (k + 1) as f64 / (gap_len + 1) as f64;
                    out.values[gap_start + k] = (left + (right - left) * frac, Quality::Interpolated);
                }
            }
        }
        out
    }
}

/// Bit-exact equality; `Missing` entries compare equal regardless of their
/// placeholder payload.
impl PartialEq for HourlySeries {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start
            && self.unit == other.unit
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&(va, qa), &(vb, qb))| {
                    qa == qb && (qa == Quality::Missing || va.to_bits() == vb.to_bits())
                })
    }
}

/// Parses a timestamp in ISO-8601 form. Accepts an explicit offset
/// (normalized to UTC) or a naive timestamp interpreted as UTC.
fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

/// Reads a `timestamp,value` CSV into an hourly series.
///
/// Rows may arrive unsorted; exact duplicates collapse silently (last write
/// wins) while duplicates with different values are an error. Hours absent
/// between the first and last row become `Missing` entries. Timestamps must
/// sit on the top of an hour.
pub fn ingest_csv(path: &Path, kind: SeriesKind) -> Result<HourlySeries> {
    let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: BTreeMap<DateTime<Utc>, f64> = BTreeMap::new();
    let mut lines = content.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((no, line)) => break (no, line),
            None => return Err(Error::EmptyFile { path: path.to_path_buf() }),
        }
    };
    let header_fields: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if header_fields != ["timestamp", "value"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: header.0 + 1,
            message: format!("expected header `timestamp,value`, found `{}`", header.1.trim()),
        });
    }

    for (no, line) in lines {
        let line_no = no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.splitn(2, ',');
        let ts_str = fields.next().unwrap_or("").trim();
        let val_str = fields.next().unwrap_or("").trim();
        let ts = parse_timestamp(ts_str).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("unparseable timestamp `{ts_str}`"),
        })?;
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(Error::SubHourly {
                path: path.to_path_buf(),
                line: line_no,
                timestamp: ts,
            });
        }
        let value: f64 = val_str.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("unparseable value `{val_str}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("non-finite value `{val_str}`"),
            });
        }
        if let Some(&existing) = rows.get(&ts) {
            if existing.to_bits() != value.to_bits() {
                return Err(Error::ConflictingDuplicate {
                    path: path.to_path_buf(),
                    line: line_no,
                    timestamp: ts,
                });
            }
        }
        rows.insert(ts, value);
    }

    let (&first, _) = rows
        .iter()
        .next()
        .ok_or_else(|| Error::EmptyFile { path: path.to_path_buf() })?;
    let (&last, _) = rows.iter().next_back().expect("non-empty map");
    let hours = (last.signed_duration_since(first).num_seconds() / 3600) as usize + 1;
    let mut values = vec![(f64::NAN, Quality::Missing); hours];
    for (ts, value) in rows {
        let idx = (ts.signed_duration_since(first).num_seconds() / 3600) as usize;
        values[idx] = (value, Quality::Observed);
    }
    HourlySeries::new(first, values, kind.unit())
}

/// Renders the series back to `timestamp,value` CSV text. `Missing` entries
/// produce no row; values use the shortest decimal form that round-trips.
pub fn to_csv_string(series: &HourlySeries) -> String {
    let mut out = String::from("timestamp,value\n");
    for (ts, value, quality) in series.iter() {
        if quality == Quality::Missing {
            continue;
        }
        let _ = writeln!(out, "{},{}", ts.format("%Y-%m-%dT%H:%M:%SZ"), value);
    }
    out
}

/// Writes the series to a CSV file; see [`to_csv_string`] for the format.
pub fn export_csv(series: &HourlySeries, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(series)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Trims two series to their common time range. Errors when the ranges do not
/// overlap.
pub fn align(a: &HourlySeries, b: &HourlySeries) -> Result<(HourlySeries, HourlySeries)> {
    let start = a.start.max(b.start);
    let end_a = a.start + Duration::hours(a.len() as i64);
    let end_b = b.start + Duration::hours(b.len() as i64);
    let end = end_a.min(end_b);
    if end <= start {
        return Err(Error::TimelineMismatch);
    }
    let ia = a.index_of(start).expect("start within a");
    let ib = b.index_of(start).expect("start within b");
    let n = (end.signed_duration_since(start).num_seconds() / 3600) as usize;
    Ok((a.slice(ia, ia + n), b.slice(ib, ib + n)))
}

/// A consumer's aligned load and temperature series.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerDataset {
    pub consumer_id: String,
    pub load: HourlySeries,
    pub temperature: HourlySeries,
}

impl ConsumerDataset {
    /// Aligns the two series onto their common range and pairs them up.
    pub fn new(consumer_id: impl Into<String>, load: HourlySeries, temperature: HourlySeries) -> Result<Self> {
        if load.unit() != Unit::Kilowatts || temperature.unit() != Unit::Celsius {
            return Err(Error::InvalidConfig {
                message: "dataset requires a kW load series and a degC temperature series".into(),
            });
        }
        let (load, temperature) = align(&load, &temperature)?;
        Ok(Self {
            consumer_id: consumer_id.into(),
            load,
            temperature,
        })
    }

    /// Hours in the aligned timeline.
    pub fn len(&self) -> usize {
        self.load.len()
    }

    /// `true` when the aligned timeline is empty.
    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }
}
