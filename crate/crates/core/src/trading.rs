//! Trading threshold, the threshold-based allocation rule and the
//! account-value step.
//!
//! When `|S(p)| > tau`, the rule holds `n = -lambda sign(S) grad S(p)` shares
//! with `lambda = L V / (|grad S(p)|^T p)`, which puts exactly `L V` to work in
//! absolute value. Otherwise it holds nothing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{check_gamma, BoxBounds, PricePoint};
use crate::error::{Error, Result};
use crate::estimation::sign;
use crate::spread::{spread_gradient, Hessian, SpreadModel};

/// Points per axis of the grid used by [`threshold_exact`].
pub const DEFAULT_GRID: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Maximize the Hessian quadratic form over the whole box.
    Exact,
    /// Freeze the Hessian at the current price.
    #[default]
    Approx,
}

impl ThresholdMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThresholdMode::Exact => "exact",
            ThresholdMode::Approx => "approx",
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ThresholdMode::Exact),
            "approx" => Ok(ThresholdMode::Approx),
            other => Err(Error::domain(format!(
                "threshold mode must be `exact` or `approx`, got `{other}`"
            ))),
        }
    }
}

#[inline]
fn quad_form(h: &Hessian, d: [f64; 2]) -> f64 {
    d[0] * (h[0][0] * d[0] + h[0][1] * d[1]) + d[1] * (h[1][0] * d[0] + h[1][1] * d[1])
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_nan() {
        Err(Error::domain("eta is NaN"))
    } else {
        Ok(())
    }
}

/// Largest `|(q - p)^T H(q) (q - p)|` over `q` in the gamma-box around `p`.
///
/// Evaluated on a `grid x grid` lattice spanning the box, plus the four
/// corners and the four points that move a single coordinate to its extreme.
pub fn max_curvature_over_box<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    gamma: f64,
    grid: usize,
) -> Result<f64> {
    let bounds = BoxBounds::new(*p, gamma)?;
    if grid < 2 {
        return Err(Error::domain(format!(
            "threshold grid needs at least 2 points per axis, got {grid}"
        )));
    }
    let c = p.as_array();
    let lo = bounds.lower();
    let hi = bounds.upper();

    let eval = |q: [f64; 2]| -> Result<f64> {
        let qp = PricePoint::new(q[0], q[1])?;
        let h = model.hessian(&qp);
        Ok(quad_form(&h, [q[0] - c[0], q[1] - c[1]]).abs())
    };

    let mut best = 0.0f64;
    for q in [
        [lo[0], lo[1]],
        [lo[0], hi[1]],
        [hi[0], lo[1]],
        [hi[0], hi[1]],
        [lo[0], c[1]],
        [hi[0], c[1]],
        [c[0], lo[1]],
        [c[0], hi[1]],
    ] {
        best = best.max(eval(q)?);
    }
    let step = 1.0 / (grid - 1) as f64;
    for i in 0..grid {
        let a = lo[0] + (hi[0] - lo[0]) * (i as f64 * step);
        for j in 0..grid {
            let b = lo[1] + (hi[1] - lo[1]) * (j as f64 * step);
            best = best.max(eval([a, b])?);
        }
    }
    Ok(best)
}

/// `tau = max_{q in box} |(q - p)^T H(q) (q - p)| / (2 eta)`, or `+inf` when
/// `eta <= 0`.
pub fn threshold_exact<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    gamma: f64,
    eta: f64,
) -> Result<f64> {
    threshold_exact_with_grid(model, p, gamma, eta, DEFAULT_GRID)
}

pub fn threshold_exact_with_grid<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    gamma: f64,
    eta: f64,
    grid: usize,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_eta(eta)?;
    if eta <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max_curvature_over_box(model, p, gamma, grid)? / (2.0 * eta))
}

/// Constant-Hessian threshold `gamma^2 |p^T H(p) p| / (2 eta)`, or `+inf`
/// when `eta <= 0`.
pub fn threshold_approx<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    gamma: f64,
    eta: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_eta(eta)?;
    if eta <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let h = model.hessian(p);
    Ok(gamma * gamma * quad_form(&h, p.as_array()).abs() / (2.0 * eta))
}

pub fn threshold<M: SpreadModel + ?Sized>(
    mode: ThresholdMode,
    model: &M,
    p: &PricePoint,
    gamma: f64,
    eta: f64,
) -> Result<f64> {
    match mode {
        ThresholdMode::Exact => threshold_exact(model, p, gamma, eta),
        ThresholdMode::Approx => threshold_approx(model, p, gamma, eta),
    }
}

/// Outcome of comparing the spread against the threshold at one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeDecision {
    pub spread: f64,
    pub threshold: f64,
    pub active: bool,
    pub holdings: [f64; 2],
    pub lambda: Option<f64>,
}

impl TradeDecision {
    fn flat(spread: f64, threshold: f64) -> Self {
        Self {
            spread,
            threshold,
            active: false,
            holdings: [0.0, 0.0],
            lambda: None,
        }
    }
}

/// Applies the trading rule. Ties `|spread| == threshold` do not trade.
pub fn allocate<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    spread: f64,
    threshold: f64,
    account_value: f64,
    leverage: f64,
) -> Result<TradeDecision> {
    if !(account_value.is_finite() && account_value > 0.0) {
        return Err(Error::domain(format!(
            "account value must be positive, got {account_value}"
        )));
    }
    if !(leverage.is_finite() && leverage > 0.0) {
        return Err(Error::domain(format!(
            "leverage must be positive, got {leverage}"
        )));
    }
    if spread.is_nan() || spread.abs() <= threshold {
        return Ok(TradeDecision::flat(spread, threshold));
    }
    let g = spread_gradient(model, p)?;
    let gross = g[0].abs() * p.p1() + g[1].abs() * p.p2();
    let lambda = leverage * account_value / gross;
    let s = sign(spread);
    Ok(TradeDecision {
        spread,
        threshold,
        active: true,
        holdings: [-lambda * s * g[0], -lambda * s * g[1]],
        lambda: Some(lambda),
    })
}

/// Change in account value `n^T dp` over one period.
#[inline]
pub fn step_account(holdings: [f64; 2], delta_p: [f64; 2]) -> f64 {
    holdings[0] * delta_p[0] + holdings[1] * delta_p[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spread::CointegrationSpread;
    use proptest::prelude::*;

    fn pt(a: f64, b: f64) -> PricePoint {
        PricePoint::new(a, b).unwrap()
    }

    /// Closed-form maximum of the quadratic form for the cointegration
    /// Hessian: each diagonal term `(d_i / q_i)^2` peaks at `q_i = p_i (1 - gamma)`.
    fn coint_closed_form(beta: f64, gamma: f64, eta: f64) -> f64 {
        let r = gamma * gamma / ((1.0 - gamma) * (1.0 - gamma));
        let m = if beta >= 0.0 { beta.max(1.0) } else { 1.0 - beta };
        m * r / (2.0 * eta)
    }

    #[test]
    fn nonpositive_eta_gives_infinite_threshold() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let p = pt(100.0, 50.0);
        for eta in [0.0, -0.3] {
            assert_eq!(threshold_exact(&m, &p, 0.05, eta).unwrap(), f64::INFINITY);
            assert_eq!(threshold_approx(&m, &p, 0.05, eta).unwrap(), f64::INFINITY);
        }
    }

    #[test]
    fn gamma_out_of_range() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let p = pt(100.0, 50.0);
        assert!(threshold_exact(&m, &p, 0.0, 0.1).is_err());
        assert!(threshold_exact(&m, &p, 1.0, 0.1).is_err());
        assert!(threshold_approx(&m, &p, 1.5, 0.1).is_err());
    }

    #[test]
    fn exact_threshold_examples() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let tau = threshold_exact(&m, &pt(100.0, 50.0), 0.05, 0.1).unwrap();
        let expected = 2.0 * 0.05f64.powi(2) / 0.95f64.powi(2) / 0.2;
        assert!((expected - 0.027_700_831_024_930_75).abs() < 1e-15);
        assert!((tau - expected).abs() < 1e-12 * expected);

        let m = CointegrationSpread::new(0.0, 0.0);
        for (a, b) in [(3.0, 9.0), (1e3, 0.2)] {
            let tau = threshold_exact(&m, &pt(a, b), 0.1, 0.4).unwrap();
            let expected = 0.01 / 0.81 / 0.8;
            assert!((tau - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn approx_threshold_examples() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let tau = threshold_approx(&m, &pt(100.0, 50.0), 0.05, 0.1).unwrap();
        assert!((tau - 0.0125).abs() < 1e-12);

        let m = CointegrationSpread::new(1.0, 0.0);
        assert!(threshold_approx(&m, &pt(100.0, 50.0), 0.05, 0.1).unwrap() < 1e-16);
    }

    #[test]
    fn allocate_example() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let p = pt(100.0, 50.0);
        let d = allocate(&m, &p, 0.1, 0.0125, 10_000.0, 1.0).unwrap();
        assert!(d.active);
        assert!((d.lambda.unwrap() - 10_000.0 / 3.0).abs() < 1e-9);
        assert!((d.holdings[0] - 200.0 / 3.0).abs() < 1e-9);
        assert!((d.holdings[1] + 200.0 / 3.0).abs() < 1e-9);
        let invested = d.holdings[0].abs() * 100.0 + d.holdings[1].abs() * 50.0;
        assert!((invested - 10_000.0).abs() < 1e-9 * 10_000.0);

        let neg = allocate(&m, &p, -0.1, 0.0125, 10_000.0, 1.0).unwrap();
        assert_eq!(neg.holdings, [-d.holdings[0], -d.holdings[1]]);
    }

    #[test]
    fn below_or_at_threshold_is_flat() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let p = pt(100.0, 50.0);
        for s in [0.0, 0.01, -0.0125, 0.0125] {
            let d = allocate(&m, &p, s, 0.0125, 10_000.0, 1.0).unwrap();
            assert!(!d.active);
            assert_eq!(d.holdings, [0.0, 0.0]);
            assert!(d.lambda.is_none());
        }
        let d = allocate(&m, &p, 5.0, f64::INFINITY, 10_000.0, 1.0).unwrap();
        assert!(!d.active);
    }

    #[test]
    fn step_examples() {
        let dv = step_account([66.6667, -66.6667], [1.0, -0.5]);
        assert!((dv - 100.00005).abs() < 1e-9);
        let dv = step_account([200.0 / 3.0, -200.0 / 3.0], [1.0, -0.5]);
        assert!((dv - 100.0).abs() < 1e-12);
        assert_eq!(step_account([0.0, 0.0], [3.0, -2.0]), 0.0);
        assert_eq!(step_account([5.0, 2.0], [0.0, 0.0]), 0.0);
    }

    #[test]
    fn mode_parse() {
        assert_eq!("exact".parse::<ThresholdMode>().unwrap(), ThresholdMode::Exact);
        assert_eq!("approx".parse::<ThresholdMode>().unwrap(), ThresholdMode::Approx);
        assert!("fast".parse::<ThresholdMode>().is_err());
    }

    proptest! {
        #[test]
        fn grid_matches_closed_form(
            beta in -3.0f64..3.0,
            p1 in 0.1f64..1e3,
            p2 in 0.1f64..1e3,
            gamma in 0.001f64..0.5,
            eta in 0.01f64..2.0,
        ) {
            let m = CointegrationSpread::new(beta, 0.0);
            let tau = threshold_exact(&m, &pt(p1, p2), gamma, eta).unwrap();
            let cf = coint_closed_form(beta, gamma, eta);
            prop_assert!((tau - cf).abs() <= 1e-9 * cf, "{tau} vs {cf}");
            prop_assert!(tau >= 0.0);
        }

        #[test]
        fn full_investment_and_market_neutrality(
            beta in 0.01f64..5.0,
            p1 in 0.1f64..1e4,
            p2 in 0.1f64..1e4,
            spread in -1.0f64..1.0,
            value in 1.0f64..1e7,
            leverage in 0.1f64..5.0,
        ) {
            prop_assume!(spread != 0.0);
            let m = CointegrationSpread::new(beta, 0.0);
            let p = pt(p1, p2);
            let d = allocate(&m, &p, spread, 0.0, value, leverage).unwrap();
            prop_assert!(d.active);
            let invested = d.holdings[0].abs() * p1 + d.holdings[1].abs() * p2;
            prop_assert!((invested - leverage * value).abs() <= 1e-9 * leverage * value);
            prop_assert!(d.holdings[0] * d.holdings[1] < 0.0);
            let g = m.gradient(&p);
            for i in 0..2 {
                prop_assert_eq!(sign(d.holdings[i]), -sign(spread) * sign(g[i]));
            }
        }

        #[test]
        fn holdings_scale_with_value(
            beta in -3.0f64..3.0,
            p1 in 0.1f64..1e3,
            p2 in 0.1f64..1e3,
            spread in -0.5f64..0.5,
            tau in 0.0f64..0.3,
            c in 0.01f64..100.0,
        ) {
            let m = CointegrationSpread::new(beta, 0.0);
            let p = pt(p1, p2);
            let a = allocate(&m, &p, spread, tau, 1000.0, 1.0).unwrap();
            let b = allocate(&m, &p, spread, tau, 1000.0 * c, 1.0).unwrap();
            prop_assert_eq!(a.active, b.active);
            for i in 0..2 {
                prop_assert!((b.holdings[i] - c * a.holdings[i]).abs() <= 1e-9 * b.holdings[i].abs().max(1e-300));
            }
        }

        #[test]
        fn bounded_returns_bound_the_loss(
            beta in -3.0f64..3.0,
            p1 in 0.1f64..1e3,
            p2 in 0.1f64..1e3,
            spread in -0.5f64..0.5,
            gamma in 0.001f64..0.9,
            x in (-1.0f64..=1.0, -1.0f64..=1.0),
            leverage in 0.1f64..1.0,
        ) {
            prop_assume!(spread != 0.0);
            let m = CointegrationSpread::new(beta, 0.0);
            let p = pt(p1, p2);
            let v = 10_000.0;
            let d = allocate(&m, &p, spread, 0.0, v, leverage).unwrap();
            let dv = step_account(d.holdings, [p1 * gamma * x.0, p2 * gamma * x.1]);
            prop_assert!(dv.abs() <= leverage * gamma * v * (1.0 + 1e-12));
        }
    }
}
