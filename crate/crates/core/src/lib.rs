//! Interval forecasting for univariate time series.

pub mod baselines;
pub mod calibrate;
pub mod cli;
pub mod convop;
pub mod data;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod synthetic;
pub mod transform;
pub mod types;

pub use error::{Error, Result};
