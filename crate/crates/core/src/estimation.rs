//! Per-window estimators of the return bound and the reversion rate.

use serde::Serialize;

use crate::domain::{compute_returns, PriceSeries};
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA_FLOOR: f64 = 1e-4;

/// Training and trading window lengths, in periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowConfig {
    pub train_len: usize,
    pub trade_len: usize,
}

impl WindowConfig {
    pub fn new(train_len: usize, trade_len: usize) -> Result<Self> {
        if train_len < 3 {
            return Err(Error::domain(format!(
                "train-len must be at least 3, got {train_len}"
            )));
        }
        if trade_len < 1 {
            return Err(Error::domain("trade-len must be at least 1"));
        }
        Ok(Self {
            train_len,
            trade_len,
        })
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            train_len: 40,
            trade_len: 5,
        }
    }
}

/// Parameters estimated at one retraining boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowEstimates {
    pub beta_hat: f64,
    pub mu_hat: f64,
    pub gamma_hat: f64,
    pub eta_hat: f64,
    pub tradeable: bool,
}

impl WindowEstimates {
    pub fn new(beta_hat: f64, mu_hat: f64, gamma_hat: f64, eta_hat: f64) -> Self {
        Self {
            beta_hat,
            mu_hat,
            gamma_hat,
            eta_hat,
            tradeable: eta_hat > 0.0,
        }
    }
}

/// Signum with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Largest absolute simple return of either stock over the window, or
/// `floor` if every return is zero.
pub fn estimate_gamma(window: &PriceSeries, floor: f64) -> Result<f64> {
    let returns = compute_returns(window)?;
    let max = returns.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    Ok(if max > 0.0 { max } else { floor })
}

/// Sample-average reversion rate of a spread series:
///
/// ```text
/// eta = -sum_j sign(S_j) (S_{j+1} - S_j) / sum_j |S_j|,   j = 0 .. len-2
/// ```
///
/// The last sample only enters through the final difference. An all-zero
/// denominator yields 0.
pub fn estimate_eta(spread: &[f64]) -> Result<f64> {
    if spread.len() < 2 {
        return Err(Error::TooShort {
            what: "eta estimate",
            needed: 2,
            got: spread.len(),
        });
    }
    let (num, den) = spread
        .windows(2)
        .fold((0.0, 0.0), |(num, den), w| {
            (num - sign(w[0]) * (w[1] - w[0]), den + w[0].abs())
        });
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
