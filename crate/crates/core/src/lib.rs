//! Threshold-based pairs trading.
//!
//! A spread function `S(p)` of two positive prices is traded only when
//! `|S(p)|` exceeds a threshold sized so that the spread's curvature over one
//! period of bounded returns cannot outweigh its expected reversion. When
//! trading, the account is fully invested along `-sign(S) grad S(p)`.
//!
//! Modules:
//! - [`domain`]: prices, returns, the bounded-return box, account state.
//! - [`spread`]: the [`spread::SpreadModel`] interface and the cointegration spread.
//! - [`estimation`]: per-window estimates of the return bound and reversion rate.
//! - [`trading`]: thresholds, the allocation rule and the account step.
//! - [`backtest`]: the sliding-window engine, ledger and report.
//! - [`synthetic`]: bounded mean-reverting pair generator and Monte Carlo checks.
//! - [`ingest`]: CSV loading and price corrections.
//! - [`cli`]: the `pairs` command line.

pub mod backtest;
pub mod cli;
pub mod domain;
pub mod error;
pub mod estimation;
pub mod ingest;
pub mod spread;
pub mod synthetic;
pub mod trading;

pub use error::{Error, Result};
