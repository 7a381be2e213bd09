//! Synthetic mean-reverting price pairs and the Monte Carlo harnesses that
//! check the positive-expected-growth property and the Taylor-remainder
//! bound of the threshold.
//!
//! # Generator
//!
//! ```text
//! s(k+1)      = (1 - theta) s(k) + c sigma_s u(k)      u ~ U[-1, 1]
//! ln p1(k+1)  = ln p1(k) + c sigma_w v(k)             v ~ U[-1, 1]
//! ln p2(k)    = beta ln p1(k) + mu + s(k)
//! ```
//!
//! With bounded innovations `|s(k)| <= M = max(|s0|, c sigma_s / theta)` for
//! all `k`, so `|d ln p1| <= c sigma_w` and
//! `|d ln p2| <= |beta| c sigma_w + theta M + c sigma_s`. The factor
//! `c in (0, 1]` is the largest value keeping both log-moves below
//! `ln(1 + gamma_cap)`, which bounds both simple returns by `gamma_cap`.
//! Innovations are scaled rather than clamped so `E[ds | s] = -theta s`
//! holds exactly.
//!
//! # Random streams
//!
//! Series number `t` is drawn from `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(t)`, so trials are reproducible regardless of how they are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{PricePoint, PriceSeries};
use crate::error::{Error, Result};
use crate::spread::{spread_gradient, CointegrationSpread, SpreadModel};
use crate::trading::{
    allocate, step_account, threshold, threshold_exact, threshold_exact_with_grid, ThresholdMode,
};

/// Stream reserved for the lemma sampler so it never overlaps a trial.
const LEMMA_STREAM: u64 = u64::MAX;

/// Log-move budget is shrunk by this relative margin so that rounding in
/// `exp` and the price ratio cannot push a return past `gamma_cap`.
const BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OUPairSpec {
    pub theta: f64,
    pub sigma_s: f64,
    pub sigma_w: f64,
    pub beta_true: f64,
    pub mu_true: f64,
    pub gamma_cap: f64,
    pub s0: f64,
    pub initial_p1: f64,
    pub seed: u64,
}

impl Default for OUPairSpec {
    fn default() -> Self {
        Self {
            theta: 0.3,
            sigma_s: 0.01,
            sigma_w: 0.02,
            beta_true: 1.0,
            mu_true: 0.0,
            gamma_cap: 0.05,
            s0: 0.0,
            initial_p1: 100.0,
            seed: 0,
        }
    }
}

impl OUPairSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain(msg));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        for (name, v) in [("sigma_s", self.sigma_s), ("sigma_w", self.sigma_w)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.gamma_cap > 0.0 && self.gamma_cap < 1.0) {
            return bad(format!("gamma_cap must lie in (0, 1), got {}", self.gamma_cap));
        }
        if !(self.initial_p1.is_finite() && self.initial_p1 > 0.0) {
            return bad(format!("initial p1 must be positive, got {}", self.initial_p1));
        }
        for (name, v) in [
            ("beta", self.beta_true),
            ("mu", self.mu_true),
            ("s0", self.s0),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.theta * self.s0.abs() >= self.log_budget() {
            return bad(format!(
                "initial spread {} reverts faster than returns bounded by {} allow",
                self.s0, self.gamma_cap
            ));
        }
        Ok(())
    }

    fn log_budget(&self) -> f64 {
        (1.0 + self.gamma_cap).ln() * (1.0 - BOUND_MARGIN)
    }

    fn max_log_move(&self, c: f64) -> f64 {
        let w = c * self.sigma_w;
        let s = c * self.sigma_s;
        let reversion = (self.theta * self.s0.abs()).max(s);
        w.max(self.beta_true.abs() * w + reversion + s)
    }

    /// Factor applied to both innovation scales so generated returns stay
    /// within `gamma_cap`.
    pub fn innovation_scale(&self) -> Result<f64> {
        self.validate()?;
        let budget = self.log_budget();
        if self.max_log_move(1.0) <= budget {
            return Ok(1.0);
        }
        // max_log_move is continuous and nondecreasing in c, and below the
        // budget at c = 0 by validate()
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.max_log_move(mid) <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Bound on `|s(k)|` along every generated path.
    pub fn spread_bound(&self) -> Result<f64> {
        let c = self.innovation_scale()?;
        Ok(self.s0.abs().max(c * self.sigma_s / self.theta))
    }

    pub fn true_model(&self) -> CointegrationSpread {
        CointegrationSpread::new(self.beta_true, self.mu_true)
    }
}

/// A generated series with the spread path that was injected into it.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub series: PriceSeries,
    pub spread: Vec<f64>,
}

pub fn generate_pair(spec: &OUPairSpec, length: usize) -> Result<PriceSeries> {
    Ok(generate_pair_stream(spec, length, 0)?.series)
}

/// Generates the series drawn from random stream `stream` of `spec.seed`.
pub fn generate_pair_stream(spec: &OUPairSpec, length: usize, stream: u64) -> Result<SyntheticPair> {
    if length < 2 {
        return Err(Error::TooShort {
            what: "synthetic series",
            needed: 2,
            got: length,
        });
    }
    let c = spec.innovation_scale()?;
    let (sigma_s, sigma_w) = (c * spec.sigma_s, c * spec.sigma_w);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);

    let mut spread = Vec::with_capacity(length);
    let mut points = Vec::with_capacity(length);
    let mut s = spec.s0;
    let mut log_p1 = spec.initial_p1.ln();
    for k in 0..length {
        if k > 0 {
            let u: f64 = rng.random_range(-1.0..=1.0);
            let v: f64 = rng.random_range(-1.0..=1.0);
            s = (1.0 - spec.theta) * s + sigma_s * u;
            log_p1 += sigma_w * v;
        }
        let log_p2 = spec.beta_true * log_p1 + spec.mu_true + s;
        points.push(PricePoint::new(log_p1.exp(), log_p2.exp())?);
        spread.push(s);
    }
    let dates = (0..length).map(|k| format!("{k:08}")).collect();
    Ok(SyntheticPair {
        series: PriceSeries::new(dates, points)?,
        spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremConfig {
    pub trials: usize,
    /// Periods per generated series.
    pub length: usize,
    pub eta: f64,
    pub gamma: f64,
    pub mode: ThresholdMode,
    pub leverage: f64,
    pub initial_value: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            length: 200,
            eta: 0.2,
            gamma: 0.05,
            mode: ThresholdMode::Exact,
            leverage: 1.0,
            initial_value: 10_000.0,
        }
    }
}

/// Mean account change over trading events in one `|S|` bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadBin {
    pub lo: f64,
    pub hi: f64,
    pub events: u64,
    #[serde(rename = "mean_dV")]
    pub mean_dv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSummary {
    pub trials: usize,
    pub trade_events: u64,
    #[serde(rename = "mean_dV")]
    pub mean_dv: Option<f64>,
    pub p_value: Option<f64>,
    pub mode: ThresholdMode,
    /// No trading event occurred in any trial.
    pub inconclusive: bool,
    /// Whether the assumed reversion rate is within the true one, i.e. the
    /// positivity guarantee applies.
    pub hypothesis_holds: bool,
    pub by_spread_bin: Vec<SpreadBin>,
}

const BINS: usize = 8;

#[derive(Debug, Clone, Default)]
struct TrialTally {
    sum: f64,
    events: u64,
    bin_sum: [f64; BINS],
    bin_events: [u64; BINS],
}

fn run_trial(
    spec: &OUPairSpec,
    config: &TheoremConfig,
    stream: u64,
    spread_bound: f64,
) -> Result<TrialTally> {
    let pair = generate_pair_stream(spec, config.length, stream)?;
    let model = spec.true_model();
    let mut value = config.initial_value;
    let mut tally = TrialTally::default();
    let pts = pair.series.points();
    for k in 0..pts.len() - 1 {
        let p = &pts[k];
        let s = model.value(p);
        if config.mode == ThresholdMode::Exact {
            // a 2x2 grid evaluates a subset of the full grid's points, so its
            // value is a lower bound on the exact threshold
            let floor = threshold_exact_with_grid(&model, p, config.gamma, config.eta, 2)?;
            if s.abs() <= floor {
                continue;
            }
        }
        let tau = threshold(config.mode, &model, p, config.gamma, config.eta)?;
        let d = allocate(&model, p, s, tau, value, config.leverage)?;
        if !d.active {
            continue;
        }
        let dv = step_account(d.holdings, p.delta_to(&pts[k + 1]));
        value += dv;
        if !(value > 0.0) {
            return Err(Error::Ruined { k, value });
        }
        tally.sum += dv;
        tally.events += 1;
        let b = ((s.abs() / spread_bound * BINS as f64) as usize).min(BINS - 1);
        tally.bin_sum[b] += dv;
        tally.bin_events[b] += 1;
    }
    Ok(tally)
}

/// Trades the true-parameter spread with the supplied `(eta, gamma)` over
/// independent synthetic series and tests whether the mean account change
/// over trading events is positive.
///
/// The p-value is one-sided for `mean > 0`, from a normal approximation with
/// a variance that treats each trial as one cluster of correlated events.
pub fn verify_theorem(spec: &OUPairSpec, config: &TheoremConfig) -> Result<TheoremSummary> {
    spec.validate()?;
    if config.trials < 1 {
        return Err(Error::domain("trials must be at least 1"));
    }
    if config.length < 2 {
        return Err(Error::domain("series length must be at least 2"));
    }
    let spread_bound = spec.spread_bound()?.max(f64::MIN_POSITIVE);

    let tallies = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, config, t, spread_bound))
        .collect::<Result<Vec<_>>>()?;

    // sequential reduction in trial order keeps the result bit-identical
    let events: u64 = tallies.iter().map(|t| t.events).sum();
    let total: f64 = tallies.iter().map(|t| t.sum).sum();

    let by_spread_bin = (0..BINS)
        .map(|b| {
            let n: u64 = tallies.iter().map(|t| t.bin_events[b]).sum();
            let s: f64 = tallies.iter().map(|t| t.bin_sum[b]).sum();
            SpreadBin {
                lo: spread_bound * b as f64 / BINS as f64,
                hi: spread_bound * (b + 1) as f64 / BINS as f64,
                events: n,
                mean_dv: (n > 0).then(|| s / n as f64),
            }
        })
        .collect();

    let (mean_dv, p_value) = if events == 0 {
        (None, None)
    } else {
        let mean = total / events as f64;
        (Some(mean), Some(one_sided_p(&tallies, mean, events)))
    };

    Ok(TheoremSummary {
        trials: config.trials,
        trade_events: events,
        mean_dv,
        p_value,
        mode: config.mode,
        inconclusive: events == 0,
        hypothesis_holds: config.eta <= spec.theta && config.gamma >= spec.gamma_cap,
        by_spread_bin,
    })
}

fn one_sided_p(tallies: &[TrialTally], mean: f64, events: u64) -> f64 {
    let clusters = tallies.len() as f64;
    let n = events as f64;
    let resid: f64 = tallies
        .iter()
        .map(|t| {
            let r = t.sum - mean * t.events as f64;
            r * r
        })
        .sum();
    let var = if clusters > 1.0 {
        clusters / (clusters - 1.0) * resid / (n * n)
    } else {
        0.0
    };
    if var > 0.0 {
        let z = mean / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        normal.sf(z)
    } else if mean > 0.0 {
        0.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub samples: usize,
    /// `max(|dS - grad S^T dp| - eta tau)` over all samples.
    pub max_violation: f64,
    /// `max(|dS - grad S^T dp| / (eta tau))`.
    pub max_ratio: f64,
    pub gamma: f64,
    pub eta: f64,
}

/// Linearization error of the spread over one price move and the bound
/// `eta tau_exact` it must respect. Returns `(remainder, bound)`.
pub fn linearization_error<M: SpreadModel + ?Sized>(
    model: &M,
    p: &PricePoint,
    dp: [f64; 2],
    gamma: f64,
    eta: f64,
) -> Result<(f64, f64)> {
    let q = PricePoint::new(p.p1() + dp[0], p.p2() + dp[1])?;
    let g = spread_gradient(model, p)?;
    let remainder = (model.value(&q) - model.value(p) - (g[0] * dp[0] + g[1] * dp[1])).abs();
    let bound = eta * threshold_exact(model, p, gamma, eta)?;
    Ok((remainder, bound))
}

/// Samples price points and admissible moves inside the `gamma_cap` box and
/// reports the worst excess of the linearization error over `eta tau_exact`,
/// using the true model of `spec` and `eta = theta`.
pub fn verify_lemma(spec: &OUPairSpec, samples: usize) -> Result<LemmaSummary> {
    spec.validate()?;
    if samples < 1 {
        return Err(Error::domain("samples must be at least 1"));
    }
    let model = spec.true_model();
    let (gamma, eta) = (spec.gamma_cap, spec.theta);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(LEMMA_STREAM);

    let (lo, hi) = (0.5f64.ln(), 1000.0f64.ln());
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let p = PricePoint::new(
            rng.random_range(lo..hi).exp(),
            rng.random_range(lo..hi).exp(),
        )?;
        let mut dp = [0.0; 2];
        for (i, pi) in p.as_array().into_iter().enumerate() {
            // a quarter of the moves sit on a face of the box
            let x: f64 = if rng.random_bool(0.25) {
                if rng.random_bool(0.5) { gamma } else { -gamma }
            } else {
                rng.random_range(-gamma..=gamma)
            };
            dp[i] = pi * x;
        }
        let (r, b) = linearization_error(&model, &p, dp, gamma, eta)?;
        max_violation = max_violation.max(r - b);
        if b > 0.0 {
            max_ratio = max_ratio.max(r / b);
        }
    }
    Ok(LemmaSummary {
        samples,
        max_violation,
        max_ratio,
        gamma,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::compute_returns;
    use crate::estimation::estimate_eta;

    #[test]
    fn noiseless_pair_is_constant() {
        let spec = OUPairSpec {
            sigma_s: 0.0,
            sigma_w: 0.0,
            s0: 0.0,
            ..OUPairSpec::default()
        };
        let pair = generate_pair_stream(&spec, 50, 3).unwrap();
        let first = pair.series.point(0);
        assert!(pair.series.points().iter().all(|p| *p == first));
        assert!(pair.spread.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn same_seed_same_series() {
        let spec = OUPairSpec::default();
        let a = generate_pair_stream(&spec, 500, 9).unwrap();
        let b = generate_pair_stream(&spec, 500, 9).unwrap();
        assert_eq!(a.series, b.series);
        let c = generate_pair_stream(&spec, 500, 10).unwrap();
        assert_ne!(a.series, c.series);
    }

    #[test]
    fn true_spread_equals_injected() {
        let spec = OUPairSpec {
            beta_true: 1.7,
            mu_true: -0.4,
            ..OUPairSpec::default()
        };
        let pair = generate_pair_stream(&spec, 2_000, 1).unwrap();
        let m = spec.true_model();
        for (p, s) in pair.series.points().iter().zip(&pair.spread) {
            assert!((m.value(p) - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn returns_stay_within_cap() {
        // scales deliberately too large so the rescaling kicks in
        let spec = OUPairSpec {
            sigma_s: 0.2,
            sigma_w: 0.3,
            beta_true: 2.0,
            gamma_cap: 0.04,
            s0: 0.05,
            ..OUPairSpec::default()
        };
        assert!(spec.innovation_scale().unwrap() < 1.0);
        let mut worst = 0.0f64;
        for stream in 0..10 {
            let pair = generate_pair_stream(&spec, 100_001, stream).unwrap();
            for r in compute_returns(&pair.series).unwrap() {
                worst = worst.max(r.max_abs());
            }
        }
        assert!(worst <= spec.gamma_cap, "worst return {worst}");
        assert!(worst > 0.5 * spec.gamma_cap);
    }

    #[test]
    fn eta_of_injected_spread() {
        let spec = OUPairSpec {
            theta: 0.2,
            ..OUPairSpec::default()
        };
        let pair = generate_pair_stream(&spec, 100_000, 0).unwrap();
        let eta = estimate_eta(&pair.spread).unwrap();
        assert!((0.18..=0.22).contains(&eta), "eta = {eta}");
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            OUPairSpec { theta: 0.0, ..OUPairSpec::default() },
            OUPairSpec { theta: 1.0, ..OUPairSpec::default() },
            OUPairSpec { sigma_s: -1.0, ..OUPairSpec::default() },
            OUPairSpec { gamma_cap: 1.0, ..OUPairSpec::default() },
            OUPairSpec { s0: 10.0, ..OUPairSpec::default() },
        ] {
            assert!(generate_pair(&spec, 10).is_err());
        }
        assert!(generate_pair(&OUPairSpec::default(), 1).is_err());
    }

    #[test]
    fn infinite_threshold_is_inconclusive() {
        let spec = OUPairSpec::default();
        let cfg = TheoremConfig {
            trials: 20,
            length: 50,
            eta: 0.0,
            ..TheoremConfig::default()
        };
        let s = verify_theorem(&spec, &cfg).unwrap();
        assert!(s.inconclusive);
        assert_eq!(s.trade_events, 0);
        assert!(s.mean_dv.is_none() && s.p_value.is_none());
    }

    #[test]
    fn violated_hypothesis_is_flagged() {
        let spec = OUPairSpec::default();
        let cfg = TheoremConfig {
            trials: 20,
            length: 50,
            eta: 0.5,
            ..TheoremConfig::default()
        };
        let s = verify_theorem(&spec, &cfg).unwrap();
        assert!(!s.hypothesis_holds);
    }

    #[test]
    fn zero_move_has_zero_remainder() {
        let m = CointegrationSpread::new(1.3, 0.2);
        let p = PricePoint::new(40.0, 70.0).unwrap();
        let (r, b) = linearization_error(&m, &p, [0.0, 0.0], 0.05, 0.3).unwrap();
        assert_eq!(r, 0.0);
        assert!(b > 0.0);
    }

    #[test]
    fn remainder_and_bound_scale_quadratically() {
        let m = CointegrationSpread::new(1.5, 0.0);
        let p = PricePoint::new(80.0, 20.0).unwrap();
        let mut ratios = Vec::new();
        let mut bounds = Vec::new();
        for gamma in [0.01, 0.02, 0.04] {
            let dp = [-gamma * 80.0, gamma * 20.0];
            let (r, b) = linearization_error(&m, &p, dp, gamma, 0.3).unwrap();
            assert!(r <= b);
            ratios.push(r / b);
            bounds.push(b);
        }
        // doubling gamma multiplies the bound by ~4
        for w in bounds.windows(2) {
            let f = w[1] / w[0];
            assert!((3.9..4.5).contains(&f), "bound growth {f}");
        }
        let spread = ratios.iter().cloned().fold(0.0, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.2, "ratios {ratios:?}");
    }
}
