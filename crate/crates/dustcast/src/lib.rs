//! Hourly fine-dust forecasting over a multi-station sensor grid.
//!
//! `dustcast` ingests hourly pollutant and climate observations from CSV,
//! aligns and imputes them into a gap-free table, normalizes every variable
//! type into `[0, 1]`, cuts the series into 48-hour windows, and trains one
//! three-layer LSTM regressor per target station to predict the next hour's
//! PM10/PM2.5 concentrations. The whole neural kernel (forward pass,
//! backpropagation through time, Adam) is implemented here from first
//! principles and checked against numerical oracles; no ML framework is used.
//!
//! ## Pipeline
//!
//! ```text
//! CSV files ──> ingest ──> features ──> train ──> eval
//!    ▲            (align,    (scale,     (LSTM +    (MSE table,
//!    │             impute)    window)     Adam)      day series, SVG)
//!  synth (deterministic generator for desk-scale verification)
//! ```
//!
//! ## Runnable examples
//!
//! Each major capability has a standalone example:
//!
//! ```bash
//! cargo run --release --example synthesize_dataset
//! cargo run --release --example ingest_and_impute
//! cargo run --release --example gradient_check
//! cargo run --release --example train_station
//! cargo run --release --example evaluate_and_report
//! cargo run --release --example predict_day
//! ```
//!
//! The same capabilities are reachable through the thin `dustcast` binary
//! (`synth`, `check`, `train`, `eval`, `predict`, `plot` subcommands); see
//! [`cli`].
//!
//! ## Determinism
//!
//! Every source of randomness flows from an explicit seed. Identical seeds
//! produce byte-identical CSVs, checkpoints, evaluation tables and plots,
//! whether stations are trained serially or in parallel.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod net;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Pollutant monitoring stations in the grid.
pub const POLLUTANT_STATIONS: usize = 39;
/// Concentrations recorded per pollutant station (SO₂, CO, NO₂, O₃, PM10, PM2.5).
pub const POLLUTANTS_PER_STATION: usize = 6;
/// Variables recorded by the single climate station.
pub const CLIMATE_VARS: usize = 9;
/// Width of one hourly feature vector: 39 × 6 pollutant columns + 9 climate columns.
pub const FEATURE_DIM: usize = POLLUTANT_STATIONS * POLLUTANTS_PER_STATION + CLIMATE_VARS;
/// Default input window length in hours (a multiple of the diurnal cycle).
pub const DEFAULT_WINDOW: usize = 48;
/// LSTM hidden-state width.
pub const HIDDEN_SIZE: usize = 42;
/// Stacked LSTM layers per model.
pub const LSTM_LAYERS: usize = 3;
/// Regression targets per model (PM10, PM2.5).
pub const OUTPUT_DIM: usize = 2;
