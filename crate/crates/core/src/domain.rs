//! Value types shared by the rest of the crate: price points, price series,
//! per-period returns, the bounded-return box and the account state.
//!
//! Everything here is plain immutable data and is `Send + Sync`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prices of the two stocks at one period. Both coordinates are strictly
/// positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    p1: f64,
    p2: f64,
}

impl PricePoint {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if valid_price(p1) && valid_price(p2) {
            Ok(Self { p1, p2 })
        } else {
            Err(Error::NonPositivePrice { p1, p2 })
        }
    }

    #[inline]
    pub fn p1(&self) -> f64 {
        self.p1
    }

    #[inline]
    pub fn p2(&self) -> f64 {
        self.p2
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 2] {
        [self.p1, self.p2]
    }

    /// Price change `next - self`.
    pub fn delta_to(&self, next: &PricePoint) -> [f64; 2] {
        [next.p1 - self.p1, next.p2 - self.p2]
    }
}

#[inline]
fn valid_price(p: f64) -> bool {
    p.is_finite() && p > 0.0
}

/// Ordered pair-price history with opaque, strictly increasing date labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<String>,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(dates: Vec<String>, points: Vec<PricePoint>) -> Result<Self> {
        if dates.len() != points.len() {
            return Err(Error::domain(format!(
                "{} date labels for {} price points",
                dates.len(),
                points.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "dates must be strictly increasing: {:?} then {:?} at index {}",
                dates[i],
                dates[i + 1],
                i + 1
            )));
        }
        Ok(Self { dates, points })
    }

    /// Builds a series from raw price columns, labelling periods by a
    /// zero-padded index so the labels sort correctly.
    pub fn from_prices(p1: &[f64], p2: &[f64]) -> Result<Self> {
        if p1.len() != p2.len() {
            return Err(Error::domain(format!(
                "price columns differ in length: {} vs {}",
                p1.len(),
                p2.len()
            )));
        }
        let points = p1
            .iter()
            .zip(p2)
            .map(|(&a, &b)| PricePoint::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        let dates = (0..points.len()).map(|k| format!("{k:08}")).collect();
        Ok(Self { dates, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn point(&self, k: usize) -> PricePoint {
        self.points[k]
    }

    pub fn date(&self, k: usize) -> &str {
        &self.dates[k]
    }

    /// Sub-series over `range`, labels included.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PriceSeries {
        PriceSeries {
            dates: self.dates[range.clone()].to_vec(),
            points: self.points[range].to_vec(),
        }
    }

    pub fn p1_column(&self) -> Vec<f64> {
        self.points.iter().map(PricePoint::p1).collect()
    }

    pub fn p2_column(&self) -> Vec<f64> {
        self.points.iter().map(PricePoint::p2).collect()
    }
}

/// Which of the two stocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stock {
    One,
    Two,
}

impl Stock {
    pub fn index(&self) -> u8 {
        match self {
            Stock::One => 1,
            Stock::Two => 2,
        }
    }
}

impl TryFrom<u8> for Stock {
    type Error = Error;

    fn try_from(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Stock::One),
            2 => Ok(Stock::Two),
            _ => Err(Error::domain(format!("stock index must be 1 or 2, got {i}"))),
        }
    }
}

/// Simple per-period returns of the two stocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnPair {
    pub x1: f64,
    pub x2: f64,
}

impl ReturnPair {
    pub fn max_abs(&self) -> f64 {
        self.x1.abs().max(self.x2.abs())
    }
}

/// Per-period simple returns `(p(j+1) - p(j)) / p(j)`; one fewer element
/// than the input.
pub fn compute_returns(series: &PriceSeries) -> Result<Vec<ReturnPair>> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            what: "return computation",
            needed: 2,
            got: series.len(),
        });
    }
    Ok(series
        .points()
        .windows(2)
        .map(|w| ReturnPair {
            x1: (w[1].p1 - w[0].p1) / w[0].p1,
            x2: (w[1].p2 - w[0].p2) / w[0].p2,
        })
        .collect())
}

/// The set of prices reachable in one period under returns bounded by
/// `gamma`: `[p_i (1 - gamma), p_i (1 + gamma)]` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    center: PricePoint,
    gamma: f64,
}

impl BoxBounds {
    pub fn new(center: PricePoint, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { center, gamma })
    }

    pub fn center(&self) -> PricePoint {
        self.center
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lower(&self) -> [f64; 2] {
        [
            self.center.p1 * (1.0 - self.gamma),
            self.center.p2 * (1.0 - self.gamma),
        ]
    }

    pub fn upper(&self) -> [f64; 2] {
        [
            self.center.p1 * (1.0 + self.gamma),
            self.center.p2 * (1.0 + self.gamma),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let c = self.center.as_array();
        (0..2).all(|i| (p[i] - c[i]).abs() <= self.gamma * c[i])
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// Account value, current share holdings and the leverage limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccountState {
    pub value: f64,
    pub holdings: [f64; 2],
    pub leverage: f64,
}

impl AccountState {
    pub fn new(value: f64, leverage: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::domain(format!(
                "account value must be positive, got {value}"
            )));
        }
        if !(leverage.is_finite() && leverage > 0.0) {
            return Err(Error::domain(format!(
                "leverage must be positive, got {leverage}"
            )));
        }
        Ok(Self {
            value,
            holdings: [0.0, 0.0],
            leverage,
        })
    }

    /// Absolute amount invested at prices `p`: `|n1| p1 + |n2| p2`.
    pub fn invested(&self, p: &PricePoint) -> f64 {
        self.holdings[0].abs() * p.p1 + self.holdings[1].abs() * p.p2
    }

    pub fn is_flat(&self) -> bool {
        self.holdings == [0.0, 0.0]
    }
}
