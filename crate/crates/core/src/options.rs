//! European options on futures for two special shapes of the price
//! generating process.
//!
//! A deterministic integrand makes the futures price Gaussian (Bachelier
//! prices); an integrand proportional to the futures price makes it
//! lognormal (Black-76 prices). The model is one-factor, so the integrand is
//! a scalar function of time.

use crate::error::{domain, Result};
use crate::numerics::{integrate, norm_cdf, norm_pdf};

/// Relative tolerance of the quadrature behind [`sigma_ut`].
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Inputs for a normally distributed futures price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalOptionInputs {
    pub forward: f64,
    pub strike: f64,
    /// Standard deviation of `F_t` given `F_u`.
    pub sigma_ut: f64,
    /// Time to maturity `t - u` in hours.
    pub span: f64,
    /// Hourly rate.
    pub rate: f64,
}

/// Inputs for a lognormally distributed futures price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalOptionInputs {
    pub forward: f64,
    pub strike: f64,
    /// Integrated squared volatility `∫ σ_s² ds` over `[u, t]`.
    pub variance: f64,
    pub span: f64,
    pub rate: f64,
}

/// Which `d±` the Black-76 price uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Black76Variant {
    /// `d± = (ln F/K ± v)/√v`.
    AsPrinted,
    /// `d± = (ln F/K ± v/2)/√v`, the textbook formula.
    Conventional,
}

impl std::str::FromStr for Black76Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "as-printed" | "as_printed" => Ok(Self::AsPrinted),
            "conventional" => Ok(Self::Conventional),
            _ => Err(format!("unknown Black-76 variant `{s}` (expected `conventional` or `as-printed`)")),
        }
    }
}

/// `σ_{u,t} = sqrt(∫_u^t φ_s² ds)` by adaptive quadrature.
pub fn sigma_ut<F>(phi: F, u: f64, t: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if u > t {
        return domain(format!("sigma_ut needs u <= t (u={u}, t={t})"));
    }
    let v = integrate(|s| phi(s).map(|p| p * p), u, t, QUADRATURE_TOL)?;
    Ok(v.max(0.0).sqrt())
}

fn check_normal(inp: &NormalOptionInputs) -> Result<f64> {
    if !(inp.sigma_ut >= 0.0) {
        return domain(format!("sigma_ut must be >= 0, got {}", inp.sigma_ut));
    }
    if !(inp.span >= 0.0) || !(inp.rate >= 0.0) {
        return domain("option span and rate must be >= 0");
    }
    Ok((-inp.rate * inp.span).exp())
}

pub fn bachelier_call(inp: &NormalOptionInputs) -> Result<f64> {
    let df = check_normal(inp)?;
    let diff = inp.forward - inp.strike;
    if inp.sigma_ut == 0.0 {
        return Ok(df * diff.max(0.0));
    }
    let d = diff / inp.sigma_ut;
    Ok(df * diff * norm_cdf(d) + df * inp.sigma_ut * norm_pdf(d))
}

pub fn bachelier_put(inp: &NormalOptionInputs) -> Result<f64> {
    let df = check_normal(inp)?;
    let diff = inp.forward - inp.strike;
    if inp.sigma_ut == 0.0 {
        return Ok(df * (-diff).max(0.0));
    }
    let d = diff / inp.sigma_ut;
    Ok(df * (-diff) * norm_cdf(-d) + df * inp.sigma_ut * norm_pdf(d))
}

fn check_lognormal(inp: &LognormalOptionInputs) -> Result<f64> {
    if !(inp.forward > 0.0) || !(inp.strike > 0.0) {
        return domain(format!(
            "lognormal option needs positive forward and strike (F={}, K={})",
            inp.forward, inp.strike
        ));
    }
    if !(inp.variance >= 0.0) {
        return domain(format!("integrated variance must be >= 0, got {}", inp.variance));
    }
    if !(inp.span >= 0.0) || !(inp.rate >= 0.0) {
        return domain("option span and rate must be >= 0");
    }
    Ok((-inp.rate * inp.span).exp())
}

/// `(d+, d-)`.
pub fn black76_d(inp: &LognormalOptionInputs, variant: Black76Variant) -> (f64, f64) {
    let v = inp.variance;
    let shift = match variant {
        Black76Variant::AsPrinted => v,
        Black76Variant::Conventional => 0.5 * v,
    };
    let m = (inp.forward / inp.strike).ln();
    let sd = v.sqrt();
    ((m + shift) / sd, (m - shift) / sd)
}

pub fn black76_call(inp: &LognormalOptionInputs, variant: Black76Variant) -> Result<f64> {
    let df = check_lognormal(inp)?;
    if inp.variance == 0.0 {
        return Ok(df * (inp.forward - inp.strike).max(0.0));
    }
    let (dp, dm) = black76_d(inp, variant);
    Ok(df * (inp.forward * norm_cdf(dp) - inp.strike * norm_cdf(dm)))
}

pub fn black76_put(inp: &LognormalOptionInputs, variant: Black76Variant) -> Result<f64> {
    let df = check_lognormal(inp)?;
    if inp.variance == 0.0 {
        return Ok(df * (inp.strike - inp.forward).max(0.0));
    }
    let (dp, dm) = black76_d(inp, variant);
    Ok(df * (inp.strike * norm_cdf(-dm) - inp.forward * norm_cdf(-dp)))
}
