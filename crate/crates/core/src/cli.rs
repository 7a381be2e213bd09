//! Command-line front end.
//!
//! Every option can come from a flag or from a config file given with
//! `--config`. The file is UTF-8 text with one `key = value` per line and `#`
//! comments; keys are the long flag names without the leading `--` (`train-len = 40`),
//! and `.` or `_` is accepted in place of `-` (`gamma.floor = 1e-4`). `adjust` may
//! repeat. Flags override the file; a repeated flag such as `--adjust`
//! replaces the file's list entirely.
//!
//! Exit status: 0 on success, 1 on invalid flags, config or input data, 2 when
//! a run fails after validation (I/O, numerical breakdown).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backtest::{
    run_backtest, write_ledger_csv, write_plot_csv, BacktestConfig, ReportSummary,
};
use crate::error::{Error, Result};
use crate::estimation::{WindowConfig, DEFAULT_GAMMA_FLOOR};
use crate::ingest::{apply_adjustments, load_csv, AdjustmentRule};
use crate::spread::Cointegration;
use crate::synthetic::{verify_lemma, verify_theorem, OUPairSpec, TheoremConfig};
use crate::trading::ThresholdMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pairs", version, about = "Threshold-based pairs trading: backtests and Monte Carlo checks")]
pub struct Cli {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sliding-window strategy over a `date,p1,p2` price file.
    Backtest(BacktestArgs),
    /// Check positive expected growth on synthetic mean-reverting pairs.
    Montecarlo(MonteCarloArgs),
    /// Check the linearization-error bound of the exact threshold.
    VerifyLemma(LemmaArgs),
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long)]
    pub trade_len: Option<usize>,
    #[arg(long)]
    pub leverage: Option<f64>,
    #[arg(long)]
    pub initial_value: Option<f64>,
    /// `approx` (constant Hessian) or `exact` (max over the return box).
    #[arg(long)]
    pub threshold_mode: Option<String>,
    #[arg(long)]
    pub gamma_floor: Option<f64>,
    /// Use a fixed return bound instead of estimating it per window.
    #[arg(long)]
    pub gamma_fixed: Option<f64>,
    /// Price correction `stock:index:factor`; repeatable.
    #[arg(long, value_name = "STOCK:INDEX:FACTOR")]
    pub adjust: Vec<String>,
    /// Comma-separated subset of `ledger,report,plot`.
    #[arg(long)]
    pub emit: Option<String>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Periods per synthetic series.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Reversion rate assumed by the trader.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Return bound assumed by the trader; also the generator's cap.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma_s: Option<f64>,
    #[arg(long)]
    pub sigma_w: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub threshold_mode: Option<String>,
    #[arg(long)]
    pub leverage: Option<f64>,
    #[arg(long)]
    pub initial_value: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Reversion rate; the bound is `eta * tau` with `eta = theta`.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
}

const BACKTEST_KEYS: &[&str] = &[
    "input",
    "out-dir",
    "train-len",
    "trade-len",
    "leverage",
    "initial-value",
    "threshold-mode",
    "gamma-floor",
    "gamma-fixed",
    "adjust",
    "emit",
];
const MONTECARLO_KEYS: &[&str] = &[
    "out-dir",
    "seed",
    "trials",
    "length",
    "theta",
    "eta",
    "gamma",
    "sigma-s",
    "sigma-w",
    "beta",
    "mu",
    "s0",
    "threshold-mode",
    "leverage",
    "initial-value",
];
const LEMMA_KEYS: &[&str] = &["out-dir", "seed", "samples", "theta", "gamma", "beta", "mu"];

/// Parsed config file: normalized key to every value given for it.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, Vec<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Row {
                    path: source.to_owned(),
                    line: i as u64 + 1,
                    msg: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim().replace(['.', '_'], "-");
            let known = BACKTEST_KEYS
                .iter()
                .chain(MONTECARLO_KEYS)
                .chain(LEMMA_KEYS)
                .any(|k| *k == key);
            if !known {
                return Err(Error::Row {
                    path: source.to_owned(),
                    line: i as u64 + 1,
                    msg: format!("unknown key `{key}`"),
                });
            }
            entries
                .entry(key)
                .or_default()
                .push(value.trim().to_owned());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Format {
            path: path.display().to_string(),
            msg: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.entries
            .get(key)
            .and_then(|v| v.last())
            .map(String::as_str)
    }

    fn all(&self, key: &str) -> &[String] {
        self.entries.get(key).map_or(&[], Vec::as_slice)
    }
}

/// Flag value if given, else the file's value, else `default`.
fn pick<T>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.last(key) {
        Some(raw) => raw
            .parse()
            .map_err(|e| Error::domain(format!("config key `{key}`: invalid value `{raw}`: {e}"))),
        None => Ok(default),
    }
}

fn pick_opt<T>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    file.last(key)
        .map(|raw| {
            raw.parse().map_err(|e| {
                Error::domain(format!("config key `{key}`: invalid value `{raw}`: {e}"))
            })
        })
        .transpose()
}

fn flag_err(flag: &str, e: Error) -> Error {
    Error::domain(format!("--{flag}: {e}"))
}

fn parse_mode(raw: &str, flag: &str) -> Result<ThresholdMode> {
    raw.parse().map_err(|e| flag_err(flag, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Emit {
    pub ledger: bool,
    pub report: bool,
    pub plot: bool,
}

impl FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut emit = Emit {
            ledger: false,
            report: false,
            plot: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "ledger" => emit.ledger = true,
                "report" => emit.report = true,
                "plot" => emit.plot = true,
                other => {
                    return Err(Error::domain(format!(
                        "unknown output `{other}`; expected ledger, report or plot"
                    )))
                }
            }
        }
        Ok(emit)
    }
}

impl Display for Emit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<&str> = [
            (self.ledger, "ledger"),
            (self.report, "report"),
            (self.plot, "plot"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        f.write_str(&parts.join(","))
    }
}

/// Fully resolved backtest invocation; echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestRun {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub train_len: usize,
    pub trade_len: usize,
    pub leverage: f64,
    pub initial_value: f64,
    pub threshold_mode: ThresholdMode,
    pub gamma_floor: f64,
    pub gamma_fixed: Option<f64>,
    pub adjust: Vec<String>,
    pub emit: String,
    #[serde(skip)]
    pub adjustments: Vec<AdjustmentRule>,
    #[serde(skip)]
    pub emit_flags: Emit,
}

impl BacktestRun {
    pub fn resolve(args: BacktestArgs, file: &ConfigFile) -> Result<Self> {
        let input = pick_opt(args.input, file, "input")?
            .ok_or_else(|| Error::domain("--input: a price file is required"))?;
        let train_len = pick(args.train_len, file, "train-len", 40)?;
        let trade_len = pick(args.trade_len, file, "trade-len", 5)?;
        WindowConfig::new(train_len, trade_len).map_err(|e| {
            flag_err(if train_len < 3 { "train-len" } else { "trade-len" }, e)
        })?;
        let mode_raw = pick(args.threshold_mode, file, "threshold-mode", "approx".to_owned())?;
        let adjust: Vec<String> = if args.adjust.is_empty() {
            file.all("adjust").to_vec()
        } else {
            args.adjust
        };
        let adjustments = adjust
            .iter()
            .map(|a| a.parse::<AdjustmentRule>().map_err(|e| flag_err("adjust", e)))
            .collect::<Result<Vec<_>>>()?;
        let emit_flags: Emit = pick(args.emit, file, "emit", "ledger,report,plot".to_owned())?
            .parse()
            .map_err(|e| flag_err("emit", e))?;

        let run = BacktestRun {
            input,
            out_dir: pick(args.out_dir, file, "out-dir", PathBuf::from("out"))?,
            train_len,
            trade_len,
            leverage: pick(args.leverage, file, "leverage", 1.0)?,
            initial_value: pick(args.initial_value, file, "initial-value", 10_000.0)?,
            threshold_mode: parse_mode(&mode_raw, "threshold-mode")?,
            gamma_floor: pick(args.gamma_floor, file, "gamma-floor", DEFAULT_GAMMA_FLOOR)?,
            gamma_fixed: pick_opt(args.gamma_fixed, file, "gamma-fixed")?,
            adjust: adjustments.iter().map(ToString::to_string).collect(),
            emit: emit_flags.to_string(),
            adjustments,
            emit_flags,
        };
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(run.leverage) {
            return Err(Error::domain(format!("--leverage: must be positive, got {}", run.leverage)));
        }
        if !positive(run.initial_value) {
            return Err(Error::domain(format!(
                "--initial-value: must be positive, got {}",
                run.initial_value
            )));
        }
        run.backtest_config().validate().map_err(|e| {
            let flag = if run.gamma_fixed.is_some() { "gamma-fixed" } else { "gamma-floor" };
            flag_err(flag, e)
        })?;
        Ok(run)
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            window: WindowConfig {
                train_len: self.train_len,
                trade_len: self.trade_len,
            },
            leverage: self.leverage,
            initial_value: self.initial_value,
            threshold_mode: self.threshold_mode,
            gamma_floor: self.gamma_floor,
            gamma_fixed: self.gamma_fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloRun {
    pub out_dir: Option<PathBuf>,
    pub spec: OUPairSpec,
    pub theorem: TheoremConfig,
}

impl MonteCarloRun {
    pub fn resolve(args: MonteCarloArgs, file: &ConfigFile) -> Result<Self> {
        let d = OUPairSpec::default();
        let t = TheoremConfig::default();
        let gamma = pick(args.gamma, file, "gamma", t.gamma)?;
        let mode_raw = pick(args.threshold_mode, file, "threshold-mode", "exact".to_owned())?;
        let spec = OUPairSpec {
            theta: pick(args.theta, file, "theta", d.theta)?,
            sigma_s: pick(args.sigma_s, file, "sigma-s", d.sigma_s)?,
            sigma_w: pick(args.sigma_w, file, "sigma-w", d.sigma_w)?,
            beta_true: pick(args.beta, file, "beta", d.beta_true)?,
            mu_true: pick(args.mu, file, "mu", d.mu_true)?,
            gamma_cap: gamma,
            s0: pick(args.s0, file, "s0", d.s0)?,
            initial_p1: d.initial_p1,
            seed: pick(args.seed, file, "seed", d.seed)?,
        };
        let theorem = TheoremConfig {
            trials: pick(args.trials, file, "trials", t.trials)?,
            length: pick(args.length, file, "length", t.length)?,
            eta: pick(args.eta, file, "eta", t.eta)?,
            gamma,
            mode: parse_mode(&mode_raw, "threshold-mode")?,
            leverage: pick(args.leverage, file, "leverage", t.leverage)?,
            initial_value: pick(args.initial_value, file, "initial-value", t.initial_value)?,
        };
        spec.validate().map_err(|e| Error::domain(format!("synthetic pair: {e}")))?;
        if theorem.trials < 1 {
            return Err(Error::domain("--trials: must be at least 1"));
        }
        if theorem.length < 2 {
            return Err(Error::domain("--length: must be at least 2"));
        }
        if !(theorem.leverage > 0.0) || theorem.leverage * gamma >= 1.0 {
            return Err(Error::domain(format!(
                "--leverage: need 0 < leverage * gamma < 1, got {}",
                theorem.leverage * gamma
            )));
        }
        if !(theorem.initial_value > 0.0) {
            return Err(Error::domain("--initial-value: must be positive"));
        }
        if theorem.eta.is_nan() {
            return Err(Error::domain("--eta: must be a number"));
        }
        Ok(Self {
            out_dir: pick_opt(args.out_dir, file, "out-dir")?,
            spec,
            theorem,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRun {
    pub out_dir: Option<PathBuf>,
    pub samples: usize,
    pub spec: OUPairSpec,
}

impl LemmaRun {
    pub fn resolve(args: LemmaArgs, file: &ConfigFile) -> Result<Self> {
        let d = OUPairSpec::default();
        let spec = OUPairSpec {
            theta: pick(args.theta, file, "theta", d.theta)?,
            beta_true: pick(args.beta, file, "beta", d.beta_true)?,
            mu_true: pick(args.mu, file, "mu", d.mu_true)?,
            gamma_cap: pick(args.gamma, file, "gamma", d.gamma_cap)?,
            seed: pick(args.seed, file, "seed", d.seed)?,
            ..d
        };
        spec.validate().map_err(|e| Error::domain(format!("lemma sampler: {e}")))?;
        let samples = pick(args.samples, file, "samples", 10_000)?;
        if samples < 1 {
            return Err(Error::domain("--samples: must be at least 1"));
        }
        Ok(Self {
            out_dir: pick_opt(args.out_dir, file, "out-dir")?,
            samples,
            spec,
        })
    }
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize, C: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: &'a C,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn run_backtest_command(run: &BacktestRun) -> Result<String> {
    let series = load_csv(&run.input)?;
    let series = apply_adjustments(&series, &run.adjustments)?;
    let (rows, report) = run_backtest(&series, &Cointegration, &run.backtest_config())?;

    let summary: ReportSummary = report.summary();
    let json = to_json(&WithConfig {
        body: &summary,
        config: run,
    })?;

    ensure_dir(&run.out_dir)?;
    if run.emit_flags.ledger {
        let mut buf = Vec::new();
        write_ledger_csv(&rows, &mut buf)?;
        write_file(&run.out_dir.join("ledger.csv"), &buf)?;
    }
    if run.emit_flags.report {
        write_file(&run.out_dir.join("report.json"), json.as_bytes())?;
    }
    if run.emit_flags.plot {
        let mut buf = Vec::new();
        write_plot_csv(&rows, &report, &mut buf)?;
        write_file(&run.out_dir.join("plot.csv"), &buf)?;
    }
    Ok(json)
}

pub fn run_montecarlo_command(run: &MonteCarloRun) -> Result<String> {
    let summary = verify_theorem(&run.spec, &run.theorem)?;
    let json = to_json(&WithConfig {
        body: &summary,
        config: run,
    })?;
    if let Some(dir) = &run.out_dir {
        ensure_dir(dir)?;
        write_file(&dir.join("montecarlo.json"), json.as_bytes())?;
    }
    Ok(json)
}

/// Largest linearization-error excess tolerated before the bound is reported
/// as violated (floating-point slack).
pub const LEMMA_TOLERANCE: f64 = 1e-12;

#[derive(Serialize)]
struct LemmaReport<'a> {
    #[serde(flatten)]
    summary: &'a crate::synthetic::LemmaSummary,
    bound_holds: bool,
}

pub fn run_lemma_command(run: &LemmaRun) -> Result<String> {
    let summary = verify_lemma(&run.spec, run.samples)?;
    let report = LemmaReport {
        summary: &summary,
        bound_holds: summary.max_violation <= LEMMA_TOLERANCE,
    };
    let json = to_json(&WithConfig {
        body: &report,
        config: run,
    })?;
    if let Some(dir) = &run.out_dir {
        ensure_dir(dir)?;
        write_file(&dir.join("lemma.json"), json.as_bytes())?;
    }
    Ok(json)
}

fn dispatch(cli: Cli) -> Result<String> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Backtest(args) => run_backtest_command(&BacktestRun::resolve(args, &file)?),
        Command::Montecarlo(args) => run_montecarlo_command(&MonteCarloRun::resolve(args, &file)?),
        Command::VerifyLemma(args) => run_lemma_command(&LemmaRun::resolve(args, &file)?),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. The JSON summary goes to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    match dispatch(cli) {
        Ok(json) => {
            print!("{json}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
