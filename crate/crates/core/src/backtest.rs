//! Staggered sliding-window backtest.
//!
//! Parameters are re-estimated every `trade_len` periods from the preceding
//! `train_len` periods and frozen in between. The trade decision itself is
//! recomputed every period from the frozen estimates, the current price and
//! the current account value. Trading starts at index `train_len`.

use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::domain::{AccountState, PricePoint, PriceSeries, Stock};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_eta, estimate_gamma, WindowConfig, WindowEstimates, DEFAULT_GAMMA_FLOOR,
};
use crate::spread::{SpreadFamily, SpreadModel};
use crate::trading::{allocate, step_account, threshold, ThresholdMode, TradeDecision};

pub const LEDGER_HEADER: [&str; 14] = [
    "k",
    "date",
    "p1",
    "p2",
    "spread",
    "threshold",
    "beta",
    "mu",
    "gamma",
    "eta",
    "n1",
    "n2",
    "value",
    "active",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestConfig {
    pub window: WindowConfig,
    pub leverage: f64,
    pub initial_value: f64,
    pub threshold_mode: ThresholdMode,
    pub gamma_floor: f64,
    /// Use this return bound in every window instead of estimating it.
    pub gamma_fixed: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            leverage: 1.0,
            initial_value: 10_000.0,
            threshold_mode: ThresholdMode::Approx,
            gamma_floor: DEFAULT_GAMMA_FLOOR,
            gamma_fixed: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        WindowConfig::new(self.window.train_len, self.window.trade_len)?;
        if !(self.leverage.is_finite() && self.leverage > 0.0) {
            return Err(Error::domain(format!(
                "leverage must be positive, got {}",
                self.leverage
            )));
        }
        if !(self.initial_value.is_finite() && self.initial_value > 0.0) {
            return Err(Error::domain(format!(
                "initial value must be positive, got {}",
                self.initial_value
            )));
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor < 1.0) {
            return Err(Error::domain(format!(
                "gamma floor must lie in (0, 1), got {}",
                self.gamma_floor
            )));
        }
        if let Some(g) = self.gamma_fixed {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::domain(format!(
                    "fixed gamma must lie in (0, 1), got {g}"
                )));
            }
            if self.leverage * g >= 1.0 {
                return Err(Error::domain(format!(
                    "leverage * gamma = {} >= 1; account positivity is not guaranteed",
                    self.leverage * g
                )));
            }
        }
        Ok(())
    }
}

/// One period of the backtest. `value` is the account value at the start of
/// the period, before the period's price move.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub k: usize,
    pub date: String,
    pub p1: f64,
    pub p2: f64,
    pub spread: f64,
    pub threshold: f64,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub eta: f64,
    pub n1: f64,
    pub n2: f64,
    pub value: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub final_value: f64,
    pub total_return: f64,
    pub max_drawdown: f64,
    pub active_periods: usize,
    /// Buy-and-hold of each stock, started with the same capital at the first
    /// trading period.
    pub buyhold_1: Vec<f64>,
    pub buyhold_2: Vec<f64>,
    /// Median of `approx / exact` threshold over periods where both are
    /// finite and the exact one is positive.
    pub threshold_ratio_median: Option<f64>,
}

/// The JSON report body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub final_value: f64,
    pub total_return: f64,
    pub max_drawdown: f64,
    pub active_periods: usize,
    pub buyhold_1_final: f64,
    pub buyhold_2_final: f64,
    pub threshold_ratio_median: Option<f64>,
}

impl BacktestReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            final_value: self.final_value,
            total_return: self.total_return,
            max_drawdown: self.max_drawdown,
            active_periods: self.active_periods,
            buyhold_1_final: *self.buyhold_1.last().unwrap_or(&f64::NAN),
            buyhold_2_final: *self.buyhold_2.last().unwrap_or(&f64::NAN),
            threshold_ratio_median: self.threshold_ratio_median,
        }
    }
}

struct Frozen<M> {
    model: Option<M>,
    est: WindowEstimates,
}

fn retrain<F: SpreadFamily>(
    family: &F,
    window: &PriceSeries,
    config: &BacktestConfig,
    k: usize,
) -> Result<Frozen<F::Model>> {
    let gamma = match config.gamma_fixed {
        Some(g) => g,
        None => estimate_gamma(window, config.gamma_floor)?,
    };
    if config.leverage * gamma >= 1.0 {
        warn!(
            "period {k}: leverage * gamma_hat = {:.4} >= 1, account positivity is not guaranteed",
            config.leverage * gamma
        );
    }
    // gamma_hat can reach 1 on a window with a >100% jump; the threshold
    // needs it inside (0, 1)
    let gamma = gamma.min(1.0 - f64::EPSILON);

    match family.fit(window) {
        Ok(model) => {
            let spread: Vec<f64> = window.points().iter().map(|p| model.value(p)).collect();
            let eta = estimate_eta(&spread)?;
            let (beta, mu) = model.coefficients().unwrap_or((f64::NAN, f64::NAN));
            Ok(Frozen {
                model: Some(model),
                est: WindowEstimates::new(beta, mu, gamma, eta),
            })
        }
        Err(Error::DegenerateRegressor) => {
            warn!("period {k}: degenerate training window, not trading until next retrain");
            Ok(Frozen {
                model: None,
                est: WindowEstimates::new(f64::NAN, f64::NAN, gamma, 0.0),
            })
        }
        Err(e) => Err(e),
    }
}

fn decide<M: SpreadModel>(
    frozen: &Frozen<M>,
    p: &PricePoint,
    config: &BacktestConfig,
    value: f64,
) -> Result<(TradeDecision, Option<f64>)> {
    let Some(model) = &frozen.model else {
        return Ok((
            TradeDecision {
                spread: f64::NAN,
                threshold: f64::INFINITY,
                active: false,
                holdings: [0.0, 0.0],
                lambda: None,
            },
            None,
        ));
    };
    let est = &frozen.est;
    let spread = model.value(p);
    let tau = threshold(config.threshold_mode, model, p, est.gamma_hat, est.eta_hat)?;
    let decision = allocate(model, p, spread, tau, value, config.leverage)?;

    let other_mode = match config.threshold_mode {
        ThresholdMode::Approx => ThresholdMode::Exact,
        ThresholdMode::Exact => ThresholdMode::Approx,
    };
    let other = threshold(other_mode, model, p, est.gamma_hat, est.eta_hat)?;
    let (approx, exact) = match config.threshold_mode {
        ThresholdMode::Approx => (tau, other),
        ThresholdMode::Exact => (other, tau),
    };
    let ratio = (approx.is_finite() && exact.is_finite() && exact > 0.0).then(|| approx / exact);
    Ok((decision, ratio))
}

/// Runs the sliding-window strategy over the whole series.
pub fn run_backtest<F: SpreadFamily>(
    series: &PriceSeries,
    family: &F,
    config: &BacktestConfig,
) -> Result<(Vec<LedgerRow>, BacktestReport)> {
    config.validate()?;
    let n = config.window.train_len;
    let m = config.window.trade_len;
    let len = series.len();
    if len < n + 2 {
        return Err(Error::TooShort {
            what: "backtest series",
            needed: n + 2,
            got: len,
        });
    }

    let mut rows = Vec::with_capacity(len - n);
    let mut ratios = Vec::new();
    let mut account = AccountState::new(config.initial_value, config.leverage)?;
    let mut frozen: Option<Frozen<F::Model>> = None;

    for k in n..len {
        if (k - n) % m == 0 {
            frozen = Some(retrain(family, &series.slice(k - n..k), config, k)?);
        }
        let state = frozen.as_ref().expect("retrained at k = train_len");
        let p = series.point(k);
        if !(account.value > 0.0) {
            return Err(Error::Ruined {
                k,
                value: account.value,
            });
        }
        let (decision, ratio) = decide(state, &p, config, account.value)?;
        account.holdings = decision.holdings;
        ratios.extend(ratio);

        rows.push(LedgerRow {
            k,
            date: series.date(k).to_owned(),
            p1: p.p1(),
            p2: p.p2(),
            spread: decision.spread,
            threshold: decision.threshold,
            beta: state.est.beta_hat,
            mu: state.est.mu_hat,
            gamma: state.est.gamma_hat,
            eta: state.est.eta_hat,
            n1: decision.holdings[0],
            n2: decision.holdings[1],
            value: account.value,
            active: decision.active,
        });

        if k + 1 < len {
            account.value += step_account(account.holdings, p.delta_to(&series.point(k + 1)));
        }
    }

    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let traded = series.slice(n..len);
    let report = BacktestReport {
        final_value: account.value,
        total_return: account.value / config.initial_value - 1.0,
        max_drawdown: max_drawdown(&values)?,
        active_periods: rows.iter().filter(|r| r.active).count(),
        buyhold_1: buy_and_hold(&traded, Stock::One, config.initial_value)?,
        buyhold_2: buy_and_hold(&traded, Stock::Two, config.initial_value)?,
        threshold_ratio_median: median(&mut ratios),
    };
    Ok((rows, report))
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    })
}

/// Value of `initial` currency invested in one stock at the first period.
pub fn buy_and_hold(series: &PriceSeries, which: Stock, initial: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::TooShort {
            what: "buy-and-hold",
            needed: 1,
            got: 0,
        });
    }
    if !(initial.is_finite() && initial > 0.0) {
        return Err(Error::domain(format!(
            "initial investment must be positive, got {initial}"
        )));
    }
    let price = |p: &PricePoint| match which {
        Stock::One => p.p1(),
        Stock::Two => p.p2(),
    };
    let p0 = price(&series.point(0));
    Ok(series
        .points()
        .iter()
        .map(|p| initial * price(p) / p0)
        .collect())
}

/// Largest peak-to-trough decline as a fraction of the running peak.
pub fn max_drawdown(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooShort {
            what: "drawdown",
            needed: 1,
            got: 0,
        });
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::domain(format!(
            "drawdown needs positive values, got {v}"
        )));
    }
    let mut peak = values[0];
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}

/// Formats like C's `%.10g`: ten significant digits, trailing zeros removed.
pub fn fmt_sig10(x: f64) -> String {
    const DIGITS: i32 = 10;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_ledger_csv<W: Write>(rows: &[LedgerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(LEDGER_HEADER).map_err(ser)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.date.clone(),
            fmt_sig10(r.p1),
            fmt_sig10(r.p2),
            fmt_sig10(r.spread),
            fmt_sig10(r.threshold),
            fmt_sig10(r.beta),
            fmt_sig10(r.mu),
            fmt_sig10(r.gamma),
            fmt_sig10(r.eta),
            fmt_sig10(r.n1),
            fmt_sig10(r.n2),
            fmt_sig10(r.value),
            u8::from(r.active).to_string(),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// Account value next to both buy-and-hold trajectories, one row per period.
pub fn write_plot_csv<W: Write>(rows: &[LedgerRow], report: &BacktestReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(["k", "date", "pairs", "buyhold_1", "buyhold_2"])
        .map_err(ser)?;
    for ((r, b1), b2) in rows.iter().zip(&report.buyhold_1).zip(&report.buyhold_2) {
        w.write_record([
            r.k.to_string(),
            r.date.clone(),
            fmt_sig10(r.value),
            fmt_sig10(*b1),
            fmt_sig10(*b2),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}
