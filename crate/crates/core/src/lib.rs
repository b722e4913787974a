//! Reconstruction-based multivariate time-series anomaly detection:
//! models, scoring functions, thresholds, evaluation metrics, channel
//! diagnosis and rank statistics for method comparison.

pub mod diagnosis;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod rankstats;
pub mod scoring;
pub mod special;
pub mod thresholding;
pub mod types;

pub use error::{Error, Result};
