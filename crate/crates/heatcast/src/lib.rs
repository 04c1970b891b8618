//! Hourly heat-load forecasting for district-heating consumers.
//!
//! The model splits a consumer's load into a nominal part driven by outdoor
//! temperature (a linear model over heating-degree lags) and a residual
//! part capturing daily, weekly, and annual rhythms (a sparse linear
//! combination of smooth periodic basis functions, switched by weekend and
//! season indicators). Both parts are estimated together from exponentially
//! discounted sufficient statistics by an expectation-maximization loop
//! that needs no tuned regularization constants: each basis function
//! carries its own prior variance, estimated from the data, and functions
//! whose variance collapses are pruned. The statistics make estimation
//! streaming-friendly — one cheap update per new observation — and the
//! same code path serves batch fitting and online operation.
//!
//! Around the estimator sit the supporting pieces a forecasting service
//! needs: strict hourly time-series ingestion ([`timeseries`]), calendar
//! covariates with time-zone and holiday handling ([`calendar`]), regressor
//! construction ([`features`]), walk-forward evaluation and portfolio
//! aggregation ([`forecaster`]), accuracy and calibration metrics
//! ([`metrics`]), a physics-based consumer simulator for end-to-end testing
//! ([`sim`]), and versioned model persistence ([`state`]).

pub mod calendar;
pub mod error;
pub mod estimator;
pub mod features;
pub mod forecaster;
pub mod metrics;
pub mod sim;
pub mod state;
pub mod timeseries;

pub use error::{Error, Result};
