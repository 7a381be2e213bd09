//! Loading `date,p1,p2` price files and applying declared price corrections.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::domain::{PricePoint, PriceSeries, Stock};
use crate::error::{Error, Result};

/// Multiplies every price of `stock` strictly before period `index` by
/// `factor`. Used to undo splits and similar corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjustmentRule {
    pub stock: Stock,
    pub index: usize,
    pub factor: f64,
}

impl AdjustmentRule {
    pub fn new(stock: Stock, index: usize, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::domain(format!(
                "adjustment factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            stock,
            index,
            factor,
        })
    }
}

/// Parses `stock:index:factor`, e.g. `2:438:0.25`.
impl FromStr for AdjustmentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("adjustment must look like stock:index:factor, got `{s}`"));
        let mut parts = s.trim().split(':');
        let (Some(a), Some(b), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let stock: u8 = a.trim().parse().map_err(|_| bad())?;
        let index: usize = b.trim().parse().map_err(|_| bad())?;
        let factor: f64 = c.trim().parse().map_err(|_| bad())?;
        AdjustmentRule::new(Stock::try_from(stock)?, index, factor)
    }
}

impl fmt::Display for AdjustmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.stock.index(), self.index, self.factor)
    }
}

pub fn load_csv(path: &Path) -> Result<PriceSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: format!("cannot open: {e}"),
    })?;
    read_csv(file, &path.display().to_string())
}

/// Parses price rows from any reader; `source` names the input in errors.
pub fn read_csv<R: Read>(input: R, source: &str) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = rdr.records();

    let format_err = |msg: String| Error::Format {
        path: source.to_owned(),
        msg,
    };
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(format_err(e.to_string())),
        None => return Err(format_err("empty file; expected header `date,p1,p2`".into())),
    };
    if header.iter().collect::<Vec<_>>() != ["date", "p1", "p2"] {
        return Err(format_err(format!(
            "expected header `date,p1,p2`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut dates: Vec<String> = Vec::new();
    let mut points = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |msg: String| Error::Row {
            path: source.to_owned(),
            line,
            msg,
        };
        if rec.len() != 3 {
            return Err(row_err(format!("expected 3 fields, found {}", rec.len())));
        }
        let date = rec[0].to_owned();
        let price = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| row_err(format!("{name} is not a number: `{}`", &rec[i])))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(row_err(format!("{name} must be positive, got `{}`", &rec[i])));
            }
            Ok(v)
        };
        let p1 = price(1, "p1")?;
        let p2 = price(2, "p2")?;
        if let Some(prev) = dates.last() {
            if *prev >= date {
                return Err(Error::Ordering {
                    path: source.to_owned(),
                    line,
                    prev: prev.clone(),
                    date,
                });
            }
        }
        dates.push(date);
        points.push(PricePoint::new(p1, p2)?);
    }
    PriceSeries::new(dates, points)
}

/// Applies every rule in order; rules on the same stock compose
/// multiplicatively.
pub fn apply_adjustments(series: &PriceSeries, rules: &[AdjustmentRule]) -> Result<PriceSeries> {
    let mut p1 = series.p1_column();
    let mut p2 = series.p2_column();
    for rule in rules {
        if rule.index > series.len() {
            return Err(Error::domain(format!(
                "adjustment index {} is past the end of a {}-period series",
                rule.index,
                series.len()
            )));
        }
        let col = match rule.stock {
            Stock::One => &mut p1,
            Stock::Two => &mut p2,
        };
        for x in &mut col[..rule.index] {
            *x *= rule.factor;
        }
    }
    let points = p1
        .into_iter()
        .zip(p2)
        .map(|(a, b)| PricePoint::new(a, b))
        .collect::<Result<Vec<_>>>()?;
    PriceSeries::new(series.dates().to_vec(), points)
}
