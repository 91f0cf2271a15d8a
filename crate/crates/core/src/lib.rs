//! Balancing-market price forecasting.
//!
//! The crate is organised around the walk-forward evaluation of 16-period
//! ahead balancing-market price forecasts:
//!
//! * [`series`] ingests and validates half-hourly settlement data, or
//!   synthesizes it for desk-scale experiments.
//! * [`features`] turns a series into fixed-layout (feature, target) samples.
//! * [`linear`], [`trees`] and [`mlp`] hold the forecasting models, with all
//!   solvers implemented here.
//! * [`backtest`] runs the rolling retrain / re-tune protocol.
//! * [`eval`] scores forecasts and compares models; [`report`] writes the
//!   CSV and SVG bundle.

pub mod backtest;
pub mod error;
pub mod eval;
pub mod features;
pub mod linear;
pub mod matrix;
pub mod mlp;
pub mod report;
pub mod rng;
pub mod series;
pub mod trees;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Number of forecast horizons (settlement periods t+2 ..= t+17).
pub const HORIZON: usize = 16;
