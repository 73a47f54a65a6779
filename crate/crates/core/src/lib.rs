//! Forecasting and backtesting toolkit for daily FX rate series.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`dataio`]: parse Yahoo-style OHLC CSV exports, forward-fill gaps,
//!   invert the quote orientation, fetch and cache remote files.
//! * [`preprocess`]: returns, direction labels, Min-Max scaling,
//!   sliding windows and chronological splits.
//! * [`lstm`]: a single-layer LSTM regressor trained with
//!   backpropagation-through-time and Adam.
//! * [`gboost`]: gradient-boosted regression trees on exponential loss for
//!   next-day direction.
//! * [`arima`]: the ARIMA(1,1,1) baseline fitted by conditional sum of squares.
//! * [`stats`]: RMSE, MAE, directional accuracy, Diebold-Mariano and the
//!   rescaled-range Hurst exponent.
//! * [`backtest`]: the trade-ledger simulation.
//! * [`cli`]: the `fxcast` command wiring everything together, with
//!   [`plot`] for the static SVG figures.
//!
//! Each capability has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run --release --example lstm_sine
//! cargo run --release --example full_pipeline
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arima;
pub mod backtest;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod gboost;
pub mod lstm;
pub mod plot;
pub mod preprocess;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
