//! `elprice`: simulate, calibrate and price with the structural load model.
//!
//! Exit codes: 0 success, 1 runtime failure or failed oracle check,
//! 2 usage error (bad flags, missing input files).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::Datelike;
use clap::{Args, Parser, Subcommand, ValueEnum};

use elprice::calibration::{self, CalibrationOptions, Gamma3Estimation, ObjectiveForm, PricingData};
use elprice::data::{
    fixed_holidays, generate_synthetic, reference_spec, MarketSeries, ModelParams, SyntheticSpec,
    ThetaSchedule,
};
use elprice::mc::McConfig;
use elprice::measure::{ou_shift, risk_premium};
use elprice::options::{bachelier_call, bachelier_put, black76_call, black76_put, Black76Variant};
use elprice::oracle::{martingale_suite, oracle_suite, OracleSetup};
use elprice::seasonality::{self, column_names, Calendar};
use elprice::structural::{forward_price, futures_price};
use elprice::{DeliverySet, ShiftMode};

#[derive(Parser)]
#[command(name = "elprice", version, about = "Structural electricity price model driven by system load")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the reference parameter file.
    Params {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic load and price series as CSV.
    Simulate(SimulateArgs),
    /// Fit the load seasonality.
    FitSeasonality(FitArgs),
    /// Fit the load seasonality and the OU deviation.
    FitOu(FitArgs),
    /// Run the full three-stage calibration.
    Calibrate(CalibrateArgs),
    /// Price a forward, futures or option.
    Price {
        #[command(subcommand)]
        what: PriceCommand,
    },
    /// Risk premium path over a grid of trading times, as CSV.
    RiskPremium(PremiumArgs),
    /// Monthly implied Girsanov parameter, as CSV.
    ImpliedTheta(ImpliedArgs),
    /// Compare every closed-form price with its Monte Carlo estimate.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ParamsArg {
    /// Parameter file (TOML); the reference parameters if omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamsArg,
    /// Length as hours, or with a suffix: `90d`, `3y` (8760 h per year).
    #[arg(long, default_value = "3y")]
    span: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Standard deviation of the observation noise on both prices.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// First hour with prices (same syntax as --span).
    #[arg(long, default_value = "0")]
    price_start: String,
    /// Comma-separated monthly values cycled from the first month.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta_monthly: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Holiday calendar (`YYYY-MM-DD holiday|partial|bridge` lines); fixed
    /// public holidays of the data years if omitted.
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gamma3Arg {
    Profiled,
    Mixture,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Write the calibrated model as a parameter file.
    #[arg(long)]
    params_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Gamma3Arg::Profiled)]
    gamma3: Gamma3Arg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Normal,
    Lognormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Call,
    Put,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Conventional,
    AsPrinted,
}

impl From<VariantArg> for Black76Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Conventional => Black76Variant::Conventional,
            VariantArg::AsPrinted => Black76Variant::AsPrinted,
        }
    }
}

#[derive(Subcommand)]
enum PriceCommand {
    /// `f_t(τ)` for a risk-neutral state `x`.
    Forward {
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Futures on `hours` consecutive deliveries from `start`, before the
    /// first day-ahead fixing.
    Futures {
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        start: f64,
        #[arg(long, default_value_t = 24)]
        hours: usize,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// European option on the futures, expiring at the first day-ahead fixing.
    Option {
        #[command(flatten)]
        params: ParamsArg,
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, value_enum, default_value_t = KindArg::Call)]
        kind: KindArg,
        /// Valuation time.
        #[arg(long)]
        t: f64,
        #[arg(long)]
        start: f64,
        #[arg(long, default_value_t = 24)]
        hours: usize,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long)]
        strike: f64,
        #[arg(long, value_enum, default_value_t = VariantArg::Conventional)]
        variant: VariantArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FirstOrder,
    Exact,
}

impl From<ModeArg> for ShiftMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FirstOrder => ShiftMode::FirstOrder,
            ModeArg::Exact => ShiftMode::Exact,
        }
    }
}

#[derive(Args)]
struct PremiumArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long)]
    tau: f64,
    /// Real-world deseasonalised load at each trading time.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    x_tilde: f64,
    /// Hours before delivery where the grid starts.
    #[arg(long, default_value_t = 2000.0)]
    lead: f64,
    #[arg(long, default_value_t = 10.0)]
    step: f64,
    /// Overrides the parameter file's value.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::FirstOrder)]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImpliedArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamsArg,
    #[arg(long, default_value_t = 1_000_000)]
    paths: usize,
    #[arg(long, default_value_t = 20_180_415)]
    seed: u64,
    /// Delivery day (days after the parameter epoch).
    #[arg(long, default_value_t = 182)]
    day: usize,
    /// Also run the nested martingale checks with this many outer paths.
    #[arg(long)]
    nested: Option<usize>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Signals a failed check (exit code 1) after the report was written.
#[derive(Debug)]
struct CheckFailed(usize);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn input_file(path: &Path) -> anyhow::Result<&Path> {
    if !path.is_file() {
        return Err(UsageError(format!("input file `{}` not found", path.display())).into());
    }
    Ok(path)
}

fn load_params(arg: &ParamsArg) -> anyhow::Result<ModelParams> {
    match &arg.params {
        Some(p) => ModelParams::from_path(input_file(p)?).with_context(|| format!("reading `{}`", p.display())),
        None => Ok(ModelParams::from_spec(&reference_spec(3, 1))),
    }
}

fn load_series(path: &Path) -> anyhow::Result<MarketSeries> {
    MarketSeries::from_path(input_file(path)?).with_context(|| format!("reading `{}`", path.display()))
}

fn load_calendar(arg: &Option<PathBuf>, series: &MarketSeries) -> anyhow::Result<Arc<Calendar>> {
    Ok(Arc::new(match arg {
        Some(p) => Calendar::from_file(input_file(p)?).with_context(|| format!("reading `{}`", p.display()))?,
        None => {
            let first = series.timestamps[0].year();
            let last = series.timestamps[series.len() - 1].year();
            fixed_holidays(first..=last)
        }
    }))
}

fn parse_hours(text: &str) -> anyhow::Result<usize> {
    let t = text.trim();
    let (num, unit) = match t.chars().last() {
        Some('y') => (&t[..t.len() - 1], 8760),
        Some('d') => (&t[..t.len() - 1], 24),
        Some('h') => (&t[..t.len() - 1], 1),
        _ => (t, 1),
    };
    let n: usize = num
        .parse()
        .map_err(|_| UsageError(format!("bad span `{text}` (expected hours or e.g. 90d, 3y)")))?;
    Ok(n * unit)
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing `{}`", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn require_epoch(params: &ModelParams, series: &MarketSeries) -> anyhow::Result<()> {
    if params.g_tilde.epoch != series.epoch() {
        bail!(
            "parameter epoch {} differs from the first data timestamp {}",
            params.g_tilde.epoch,
            series.epoch()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Params { out } => emit(&out, &ModelParams::from_spec(&reference_spec(3, 1)).to_toml()),
        Command::Simulate(a) => simulate(a),
        Command::FitSeasonality(a) => fit_seasonality(a),
        Command::FitOu(a) => fit_ou(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Price { what } => price(what),
        Command::RiskPremium(a) => premium(a),
        Command::ImpliedTheta(a) => implied(a),
        Command::Verify(a) => verify(a),
    }
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let p = load_params(&a.params)?;
    if !(a.noise >= 0.0) {
        return Err(UsageError("--noise must be >= 0".into()).into());
    }
    let spec = SyntheticSpec {
        ou: p.ou,
        supply: p.supply,
        g_tilde: p.g_tilde.clone(),
        gamma3: p.gamma3.clone(),
        theta: match a.theta_monthly {
            Some(v) if !v.is_empty() => ThetaSchedule::Monthly(v),
            _ => ThetaSchedule::Constant(p.theta),
        },
        conv: p.conv,
        hours: parse_hours(&a.span)?,
        price_start: parse_hours(&a.price_start)?,
        noise_intraday: a.noise,
        noise_day_ahead: a.noise,
        seed: a.seed,
    };
    let series = generate_synthetic(&spec)?;
    series.to_path(&a.out).with_context(|| format!("writing `{}`", a.out.display()))?;
    eprintln!("wrote {} hours to {}", series.len(), a.out.display());
    Ok(())
}

fn fit_seasonality(a: FitArgs) -> anyhow::Result<()> {
    let series = load_series(&a.data)?;
    let cal = load_calendar(&a.calendar, &series)?;
    let obs: Vec<(f64, f64)> = (0..series.len()).map(|k| (series.tau(k), series.load[k])).collect();
    let fit = seasonality::fit_detailed(&obs, series.epoch(), cal)?;
    let mut s = String::from("# load seasonality\n");
    let _ = writeln!(s, "epoch = {}", series.epoch().format("%Y-%m-%dT%H:%M:%S"));
    for ((name, c), se) in column_names().iter().zip(fit.model.coefficients()).zip(&fit.standard_errors) {
        let _ = writeln!(s, "{name} = {c:.10e}  # se {se:.3e}");
    }
    let _ = writeln!(s, "residual_sd = {:.10e}", fit.residual_sd);
    let _ = writeln!(s, "n_obs = {}", fit.n_obs);
    emit(&a.out, &s)
}

fn fit_ou(a: FitArgs) -> anyhow::Result<()> {
    let series = load_series(&a.data)?;
    let cal = load_calendar(&a.calendar, &series)?;
    let g = calibration::fit_load_seasonality(&series, cal)?;
    let ou = calibration::fit_ou(&series, &g)?;
    let s = format!(
        "# OU deviation from the load seasonality\nlambda = {:.10e}\nsigma = {:.10e}\nx0 = {:.10e}\nn_obs = {}\n",
        ou.lambda,
        ou.sigma,
        ou.x0,
        series.len()
    );
    emit(&a.out, &s)
}

fn calibrate(a: CalibrateArgs) -> anyhow::Result<()> {
    let series = load_series(&a.fit.data)?;
    let cal = load_calendar(&a.fit.calendar, &series)?;
    if let Some((from, to, n)) = series.price_coverage() {
        eprintln!("prices from {from} to {to} ({n} aligned hours)");
    }
    let conv = elprice::Conventions::default();
    let opts = CalibrationOptions {
        gamma3: match a.gamma3 {
            Gamma3Arg::Profiled => Gamma3Estimation::Profiled,
            Gamma3Arg::Mixture => Gamma3Estimation::Mixture,
        },
        ..CalibrationOptions::default()
    };
    let r = calibration::calibrate(&series, cal, &conv, &opts)?;
    if let Some(p) = &a.params_out {
        std::fs::write(p, r.to_params(&conv).to_toml()).with_context(|| format!("writing `{}`", p.display()))?;
    }
    emit(&a.fit.out, &r.report())
}

fn deliveries(start: f64, hours: usize) -> anyhow::Result<DeliverySet<f64>> {
    if hours == 0 {
        return Err(UsageError("--hours must be positive".into()).into());
    }
    Ok(DeliverySet::new((0..hours).map(|h| start + h as f64))?)
}

fn price(what: PriceCommand) -> anyhow::Result<()> {
    let value = match what {
        PriceCommand::Forward { params, t, tau, x } => {
            let m = load_params(&params)?.model_q()?;
            forward_price(&m, t, tau, x)?
        }
        PriceCommand::Futures { params, t, start, hours, x } => {
            let m = load_params(&params)?.model_q()?;
            let d = deliveries(start, hours)?;
            if t > start - m.conv.delta {
                bail!("futures pricing needs t before the first day-ahead fixing");
            }
            futures_price(&m, t, &d, &vec![x; d.len()])?
        }
        PriceCommand::Option {
            params,
            family,
            kind,
            t,
            start,
            hours,
            x,
            strike,
            variant,
        } => {
            let p = load_params(&params)?;
            let m = p.model_q()?;
            let mut s = OracleSetup::standard(m, p.theta, 0)?;
            s.deliveries = deliveries(start, hours)?;
            s.option_start = t;
            s.option_expiry = start - s.model.conv.delta;
            s.x_t = x;
            if !(t < s.option_expiry) {
                bail!("option valuation time must be before the first day-ahead fixing");
            }
            s.strike_offset = strike - s.futures_at_start()?;
            s.variant = variant.into();
            match family {
                FamilyArg::Normal => {
                    let i = s.normal_inputs()?;
                    match kind {
                        KindArg::Call => bachelier_call(&i)?,
                        KindArg::Put => bachelier_put(&i)?,
                    }
                }
                FamilyArg::Lognormal => {
                    let i = s.lognormal_inputs()?;
                    match kind {
                        KindArg::Call => black76_call(&i, s.variant)?,
                        KindArg::Put => black76_put(&i, s.variant)?,
                    }
                }
            }
        }
    };
    println!("{value:.12e}");
    Ok(())
}

fn premium(a: PremiumArgs) -> anyhow::Result<()> {
    let p = load_params(&a.params)?;
    let theta = a.theta.unwrap_or(p.theta);
    let mut params = p.clone();
    params.theta = theta;
    let m = params.model_q()?;
    if !(a.step > 0.0) || !(a.lead >= 0.0) {
        return Err(UsageError("--step must be positive and --lead non-negative".into()).into());
    }
    let n = (a.lead / a.step).floor() as usize;
    let mut s = String::from("t,premium\n");
    for k in (0..=n).rev() {
        let t = (a.tau - k as f64 * a.step).max(0.0);
        let pi = risk_premium(&m, theta, t, a.tau, a.x_tilde, a.mode.into())?;
        let _ = writeln!(s, "{t},{pi:.12e}");
    }
    emit(&a.out, &s)
}

fn implied(a: ImpliedArgs) -> anyhow::Result<()> {
    let p = load_params(&a.params)?;
    let series = load_series(&a.data)?;
    require_epoch(&p, &series)?;
    let data = PricingData::new(&series, &p.g_tilde, &p.ou, &p.gamma3, &p.conv)?;
    let (months, skipped) = calibration::implied_theta_monthly(&data, &p.supply, ObjectiveForm::Printed)?;
    for note in skipped {
        eprintln!("{note}");
    }
    let mut s = String::from("month,theta,n_obs,objective\n");
    for m in months {
        let _ = writeln!(s, "{}-{:02},{:.8e},{},{:.8e}", m.year, m.month, m.theta, m.n_obs, m.objective);
    }
    emit(&a.out, &s)
}

fn verify(a: VerifyArgs) -> anyhow::Result<()> {
    if a.paths < 2 {
        return Err(UsageError("--paths must be at least 2".into()).into());
    }
    let p = load_params(&a.params)?;
    let setup = OracleSetup::standard(p.model_q()?, p.theta, a.day)?;
    let cfg = McConfig::default().with_paths(a.paths).with_seed(a.seed);
    let lines = oracle_suite(&setup, &cfg)?;
    let mut failed = 0;
    for l in &lines {
        println!("{l}");
        failed += usize::from(!l.passes());
    }
    if let Some(outer) = a.nested {
        let ncfg = cfg.with_paths(outer);
        for r in martingale_suite(&setup, &ncfg)? {
            for st in &r.steps {
                let ok = st.passes(3.0);
                failed += usize::from(!ok);
                println!(
                    "martingale {:<32} {:>9.1} -> {:<9.1} gap={:<12.4e} se={:<12.4e} z={:>8.3} {}",
                    r.name,
                    st.t,
                    st.u,
                    st.gap.mean,
                    st.gap.std_error,
                    st.gap.z_score(0.0),
                    if ok { "PASS" } else { "FAIL" }
                );
            }
        }
    }
    // the risk-neutral state used above, for reference
    let x_q = ou_shift(setup.x_tilde, &setup.model.ou, setup.theta, setup.premium_t, setup.mode)?;
    println!("# premium state: real-world {} risk-neutral {x_q:.6}", setup.x_tilde);
    if failed > 0 {
        return Err(CheckFailed(failed).into());
    }
    Ok(())
}
