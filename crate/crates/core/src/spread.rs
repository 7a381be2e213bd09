//! Spread functions `S(p)` of the two prices, with gradient and Hessian.
//!
//! Any twice-differentiable function of two positive prices can be plugged in
//! through [`SpreadModel`]. The shipped instance is the log-price
//! cointegration spread `S(p) = ln p2 - beta ln p1 - mu`, fitted per window by
//! [`fit_cointegration`].

use serde::Serialize;

use crate::domain::{PricePoint, PriceSeries};
use crate::error::{Error, Result};

pub type Gradient = [f64; 2];
pub type Hessian = [[f64; 2]; 2];

/// A scalar spread function of two positive prices.
///
/// Implementations must be pure. The trading rule requires the gradient to be
/// nonzero wherever it is evaluated; [`spread_gradient`] enforces that.
pub trait SpreadModel: Send + Sync {
    fn value(&self, p: &PricePoint) -> f64;

    fn gradient(&self, p: &PricePoint) -> Gradient;

    fn hessian(&self, p: &PricePoint) -> Hessian;

    /// `(beta, mu)` for models that have them; used for ledger output only.
    fn coefficients(&self) -> Option<(f64, f64)> {
        None
    }
}

/// A rule for fitting a [`SpreadModel`] to a training window.
pub trait SpreadFamily: Send + Sync {
    type Model: SpreadModel;

    fn fit(&self, window: &PriceSeries) -> Result<Self::Model>;
}

pub fn spread_value<M: SpreadModel + ?Sized>(model: &M, p: &PricePoint) -> f64 {
    model.value(p)
}

/// Gradient of the spread, rejecting stationary points.
pub fn spread_gradient<M: SpreadModel + ?Sized>(model: &M, p: &PricePoint) -> Result<Gradient> {
    let g = model.gradient(p);
    if g[0] == 0.0 && g[1] == 0.0 {
        return Err(Error::StationaryPoint {
            p1: p.p1(),
            p2: p.p2(),
        });
    }
    if !(g[0].is_finite() && g[1].is_finite()) {
        return Err(Error::domain(format!(
            "spread gradient is not finite at ({}, {})",
            p.p1(),
            p.p2()
        )));
    }
    Ok(g)
}

pub fn spread_hessian<M: SpreadModel + ?Sized>(model: &M, p: &PricePoint) -> Hessian {
    model.hessian(p)
}

/// `S(p) = ln p2 - beta ln p1 - mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CointegrationSpread {
    pub beta: f64,
    pub mu: f64,
}

impl CointegrationSpread {
    pub fn new(beta: f64, mu: f64) -> Self {
        Self { beta, mu }
    }
}

impl SpreadModel for CointegrationSpread {
    fn value(&self, p: &PricePoint) -> f64 {
        p.p2().ln() - self.beta * p.p1().ln() - self.mu
    }

    fn gradient(&self, p: &PricePoint) -> Gradient {
        [-self.beta / p.p1(), 1.0 / p.p2()]
    }

    fn hessian(&self, p: &PricePoint) -> Hessian {
        [
            [self.beta / (p.p1() * p.p1()), 0.0],
            [0.0, -1.0 / (p.p2() * p.p2())],
        ]
    }

    fn coefficients(&self) -> Option<(f64, f64)> {
        Some((self.beta, self.mu))
    }
}

/// Fits [`CointegrationSpread`] by ordinary least squares.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cointegration;

impl SpreadFamily for Cointegration {
    type Model = CointegrationSpread;

    fn fit(&self, window: &PriceSeries) -> Result<CointegrationSpread> {
        fit_cointegration(window)
    }
}

/// Regresses `ln p2` on `ln p1` with intercept over the window. The residuals
/// of the fit are exactly the spread values of the returned model.
pub fn fit_cointegration(window: &PriceSeries) -> Result<CointegrationSpread> {
    let n = window.len();
    if n < 3 {
        return Err(Error::TooShort {
            what: "cointegration fit",
            needed: 3,
            got: n,
        });
    }
    let xs: Vec<f64> = window.points().iter().map(|p| p.p1().ln()).collect();
    let ys: Vec<f64> = window.points().iter().map(|p| p.p2().ln()).collect();
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;

    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    let scale: f64 = xs.iter().map(|x| x * x).sum();
    if !(sxx > f64::EPSILON * scale) {
        return Err(Error::DegenerateRegressor);
    }
    let beta = sxy / sxx;
    Ok(CointegrationSpread {
        beta,
        mu: y_mean - beta * x_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn pt(a: f64, b: f64) -> PricePoint {
        PricePoint::new(a, b).unwrap()
    }

    #[test]
    fn value_examples() {
        let m = CointegrationSpread::new(2.0, 0.5);
        assert!((spread_value(&m, &pt(E, E * E)) + 0.5).abs() < 1e-15);

        let m = CointegrationSpread::new(1.0, 0.0);
        for x in [0.01, 1.0, 37.5, 1e6] {
            assert_eq!(spread_value(&m, &pt(x, x)), 0.0);
        }
        let m = CointegrationSpread::new(0.0, 0.0);
        assert_eq!(spread_value(&m, &pt(123.0, 1.0)), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let m = CointegrationSpread::new(2.0, 0.0);
        let g = spread_gradient(&m, &pt(100.0, 50.0)).unwrap();
        assert!((g[0] + 0.02).abs() < 1e-17);
        assert!((g[1] - 0.02).abs() < 1e-17);

        let m = CointegrationSpread::new(0.0, 0.0);
        assert_eq!(spread_gradient(&m, &pt(7.0, 1.0)).unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn hessian_examples() {
        let m = CointegrationSpread::new(2.0, 0.3);
        let h = spread_hessian(&m, &pt(100.0, 50.0));
        assert!((h[0][0] - 0.0002).abs() < 1e-18);
        assert!((h[1][1] + 0.0004).abs() < 1e-18);
        assert_eq!(h[0][1], 0.0);
        assert_eq!(h[1][0], 0.0);

        let m = CointegrationSpread::new(0.0, 0.0);
        let h = spread_hessian(&m, &pt(3.0, 4.0));
        assert_eq!(h, [[0.0, 0.0], [0.0, -1.0 / 16.0]]);
    }

    struct Flat;
    impl SpreadModel for Flat {
        fn value(&self, _: &PricePoint) -> f64 {
            0.0
        }
        fn gradient(&self, _: &PricePoint) -> Gradient {
            [0.0, 0.0]
        }
        fn hessian(&self, _: &PricePoint) -> Hessian {
            [[0.0; 2]; 2]
        }
    }

    #[test]
    fn zero_gradient_is_rejected() {
        assert!(matches!(
            spread_gradient(&Flat, &pt(1.0, 1.0)),
            Err(Error::StationaryPoint { .. })
        ));
    }

    #[test]
    fn exact_linear_relation_is_recovered() {
        let p1: Vec<f64> = (0..10).map(|k| 10.0 + 3.0 * k as f64).collect();
        let p2: Vec<f64> = p1.iter().map(|x| (2.0 * x.ln() + 0.5).exp()).collect();
        let w = PriceSeries::from_prices(&p1, &p2).unwrap();
        let m = fit_cointegration(&w).unwrap();
        assert!((m.beta - 2.0).abs() < 1e-12);
        assert!((m.mu - 0.5).abs() < 1e-12);
        for p in w.points() {
            assert!(m.value(p).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_regressor_is_degenerate() {
        let w = PriceSeries::from_prices(&[5.0; 8], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        assert!(matches!(
            fit_cointegration(&w),
            Err(Error::DegenerateRegressor)
        ));
    }

    #[test]
    fn too_short_window() {
        let w = PriceSeries::from_prices(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(matches!(
            fit_cointegration(&w),
            Err(Error::TooShort { needed: 3, .. })
        ));
    }
}
