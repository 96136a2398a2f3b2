//! probcast: a probabilistic time series forecasting toolkit.
//!
//! The crate is organized as a pipeline: datasets stream records,
//! transformations act on the stream, estimators train predictors,
//! predictors emit forecast objects, and the evaluation component scores
//! them against held-out truth. Anomaly detection reuses the same
//! predictive machinery. Every configured component serializes to a
//! human-readable log that is sufficient to re-run an experiment exactly.
//!
//! Per-series work in backtests and detection is data-parallel; the
//! `parallel` feature (default) runs it on rayon, and disabling it falls
//! back to sequential execution with identical results.

pub mod anomaly;
pub mod config;
pub mod dataset;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod model;
pub mod neuralqr;
pub mod npts;
pub mod runtime;
pub mod ssm;
pub mod transform;

pub use error::{Error, Result};
