#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use pairs_core::domain::{PricePoint, PriceSeries};
use pairs_core::spread::SpreadModel;

/// Central differences of the spread value with step `rel * p_i`.
pub fn fd_gradient<M: SpreadModel>(m: &M, p: [f64; 2], rel: f64) -> [f64; 2] {
    let f = |a: f64, b: f64| m.value(&PricePoint::new(a, b).unwrap());
    let h1 = rel * p[0];
    let h2 = rel * p[1];
    [
        (f(p[0] + h1, p[1]) - f(p[0] - h1, p[1])) / (2.0 * h1),
        (f(p[0], p[1] + h2) - f(p[0], p[1] - h2)) / (2.0 * h2),
    ]
}

/// Central differences of the analytic gradient, column by column.
pub fn fd_hessian<M: SpreadModel>(m: &M, p: [f64; 2], rel: f64) -> [[f64; 2]; 2] {
    let g = |a: f64, b: f64| m.gradient(&PricePoint::new(a, b).unwrap());
    let mut h = [[0.0; 2]; 2];
    for j in 0..2 {
        let step = rel * p[j];
        let mut up = p;
        let mut dn = p;
        up[j] += step;
        dn[j] -= step;
        let (gu, gd) = (g(up[0], up[1]), g(dn[0], dn[1]));
        for i in 0..2 {
            h[i][j] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    h
}

pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn frob(m: [[f64; 2]; 2]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn write_series_csv(series: &PriceSeries, path: &Path) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "date,p1,p2").unwrap();
    for (d, p) in series.dates().iter().zip(series.points()) {
        writeln!(f, "{d},{:e},{:e}", p.p1(), p.p2()).unwrap();
    }
}

/// Two-regressor OLS solved through the normal equations
/// `[n, Sx; Sx, Sxx] [mu; beta] = [Sy; Sxy]` by Cramer's rule.
pub fn normal_equations(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let mu = (sy * sxx - sx * sxy) / det;
    let beta = (n * sxy - sx * sy) / det;
    (beta, mu)
}
