//! Crate-wide error type.
//!
//! Variants are grouped by origin: file/parse problems, data-shape problems,
//! and numeric failures. The CLI maps these groups onto distinct exit codes,
//! so keep new variants in the right family.

use std::path::PathBuf;

use chrono::{DateTime, Utc};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed row or field in an input file, with its line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input file had a header but no data rows.
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },

    /// The same timestamp appeared twice with different values.
    #[error("{path}:{line}: conflicting duplicate timestamp {timestamp}")]
    ConflictingDuplicate {
        path: PathBuf,
        line: usize,
        timestamp: DateTime<Utc>,
    },

    /// A timestamp was not aligned to the top of an hour.
    #[error("{path}:{line}: sub-hourly timestamp {timestamp} (minutes and seconds must be zero)")]
    SubHourly {
        path: PathBuf,
        line: usize,
        timestamp: DateTime<Utc>,
    },

    /// Vector/matrix dimensions disagreed.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// The lag buffer did not hold enough history to build a regressor.
    #[error("insufficient history: need {needed} values, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    /// Two series have no overlapping hours.
    #[error("series timelines do not overlap")]
    TimelineMismatch,

    /// A forecast target lacked the exogenous temperature it needs.
    #[error("missing temperature or unwarmed lags for forecast target {timestamp}")]
    MissingTemperature { timestamp: DateTime<Utc> },

    /// Not enough usable samples for the requested operation.
    #[error("insufficient data: {context}")]
    InsufficientData { context: String },

    /// A configuration value failed validation.
    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },

    /// A linear solve failed even after regularization.
    #[error("singular linear system: {context}")]
    Singular { context: String },

    /// A matrix that must be positive definite was not.
    #[error("matrix not positive definite: {context}")]
    NotPositiveDefinite { context: String },

    /// The building integrator diverged; the substep is too coarse.
    #[error(
        "simulation diverged at hour {hour}: |indoor temperature| exceeded {limit} degC; \
         retry with substep <= {suggested_substep_secs} s"
    )]
    UnstableSimulation {
        hour: usize,
        limit: f64,
        suggested_substep_secs: u32,
    },

    /// Relative error metrics are undefined for zero-mean actuals.
    #[error("actuals have zero mean; relative error undefined")]
    ZeroMeanActuals,

    /// A computation produced NaN or infinity.
    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },

    /// State file carries an unsupported format version.
    #[error("state file version {found} not supported (expected {expected})")]
    StateVersion { found: u32, expected: u32 },

    /// State file is structurally invalid (bad JSON, inconsistent shapes).
    #[error("invalid state file: {message}")]
    StateFormat { message: String },
}

impl Error {
    /// Groups the variant for exit-code mapping: `true` for numeric failures
    /// (singular systems, divergence, non-finite results), `false` otherwise.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::UnstableSimulation { .. }
                | Error::ZeroMeanActuals
                | Error::NonFinite { .. }
        )
    }

    /// `true` for configuration problems (as opposed to data or numeric ones).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. })
    }
}
