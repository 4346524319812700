//! Brute-force Monte Carlo counterparts of the closed-form prices.
//!
//! Terminal values are sampled with exact OU transitions; Euler grids appear
//! only in the pathwise check of the price generating process. Paths are
//! split into fixed-size batches, each batch draws from its own ChaCha
//! stream derived from the master seed, and batch statistics are merged in
//! batch order, so an estimate depends only on the configuration and never
//! on the thread count.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::conventions::DeliverySet;
use crate::error::{domain, Result};
use crate::measure::{level_shift, DensitySampler, LinearKernel, ShiftMode};
use crate::numerics::integrate;
use crate::options::{LognormalOptionInputs, NormalOptionInputs};
use crate::ou::{biased_mean, OuParams};
use crate::structural::{
    forward_price, futures_weight, gamma_aux, intraday_price, intrinsic_price, price_generating, Branch, ModelQ,
};

const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Step in hours for pathwise checks.
    pub time_step: f64,
    pub antithetic: bool,
    /// Extra constant drift added to the simulated load deviation (per hour),
    /// or to the log-drift of a simulated lognormal forward. Zero in normal
    /// use; a small nonzero value checks that an agreement test has power.
    pub drift_bias: f64,
    /// Inner paths per outer path in nested checks.
    pub inner_paths: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 1_000_000,
            seed: 20_180_415,
            time_step: 1e-2,
            antithetic: false,
            drift_bias: 0.0,
            inner_paths: 20,
        }
    }
}

impl McConfig {
    pub fn with_paths(self, n_paths: usize) -> Self {
        Self { n_paths, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_bias(self, drift_bias: f64) -> Self {
        Self { drift_bias, ..self }
    }

    pub fn with_antithetic(self, antithetic: bool) -> Self {
        Self { antithetic, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return domain(format!("need at least 2 paths, got {}", self.n_paths));
        }
        if !(self.time_step > 0.0) {
            return domain(format!("time step must be positive, got {}", self.time_step));
        }
        if self.inner_paths < 2 {
            return domain(format!("need at least 2 inner paths, got {}", self.inner_paths));
        }
        if !self.drift_bias.is_finite() {
            return domain("drift bias must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// Standardised distance to `reference`. A zero standard error gives 0
    /// for agreement to 1e-12 relative and infinity otherwise.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 1e-12 * reference.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY * diff.signum()
        }
    }

    pub fn agrees(&self, reference: f64, k: f64) -> bool {
        self.z_score(reference).abs() <= k
    }

    /// `reference - self`, with the same standard error.
    pub fn subtracted_from(&self, reference: f64) -> Self {
        Self {
            mean: reference - self.mean,
            ..*self
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mean: c * self.mean,
            std_error: c.abs() * self.std_error,
            n_paths: self.n_paths,
        }
    }
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        n: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Averages `f` over `cfg.n_paths` vectors of `dims` independent standard
/// normals. With antithetic sampling each sample is the mean of `f(z)` and
/// `f(-z)`. `stream` separates estimators that share a seed.
pub fn estimate<F>(cfg: &McConfig, dims: usize, stream: u64, f: F) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let n = cfg.n_paths;
    let n_batches = n.div_ceil(BATCH);
    let base = stream_seed(cfg.seed, stream);
    let parts: Vec<Result<Moments>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(b as u64);
            let count = BATCH.min(n - b * BATCH);
            let mut z = vec![0.0; dims];
            let mut neg = vec![0.0; dims];
            let mut m = Moments::EMPTY;
            for _ in 0..count {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let v = if cfg.antithetic {
                    for (a, b) in neg.iter_mut().zip(&z) {
                        *a = -b;
                    }
                    0.5 * (f(&z)? + f(&neg)?)
                } else {
                    f(&z)?
                };
                m.push(v);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::EMPTY;
    for p in parts {
        total = total.merge(p?);
    }
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean: total.mean,
        std_error: (var / total.n).sqrt(),
        n_paths: n,
    })
}

/// Exact OU step from `x` over `dt` with an added constant drift.
#[inline]
pub(crate) fn ou_step(ou: &OuParams<f64>, x: f64, dt: f64, bias: f64, z: f64) -> f64 {
    biased_mean(ou, x, dt, bias) + ou.variance(dt).sqrt() * z
}

/// `E_Q[p(τ) | X_t = x_t]`, the forward price.
pub fn mc_forward(model: &ModelQ<f64>, t: f64, tau: f64, x_t: f64, cfg: &McConfig) -> Result<McEstimate> {
    let tau_e = model.ex_post(tau);
    if t > tau_e {
        return domain(format!("trading time {t} is after the end of delivery {tau_e}"));
    }
    let g = model.g.value(tau_e);
    let dt = tau_e - t;
    estimate(cfg, 1, 1, |z| {
        let x = ou_step(&model.ou, x_t, dt, cfg.drift_bias, z[0]);
        intrinsic_price(model, g + x, tau)
    })
}

/// Tradable price `e^{-r(τe-t)} E_Q[p(τ) | X_t]`.
pub fn mc_tradable(model: &ModelQ<f64>, t: f64, tau: f64, x_t: f64, cfg: &McConfig) -> Result<McEstimate> {
    let df = (-model.conv.hourly_rate() * (model.ex_post(tau) - t)).exp();
    Ok(mc_forward(model, t, tau, x_t, cfg)?.scaled(df))
}

/// `E_Q[e^{α_i X_{τe}} | X_t]` scaled by `e^{α_i (g(τe) - β_i)}`, the
/// expectation that `γ_i(t; τ)` represents.
pub fn mc_gamma(model: &ModelQ<f64>, branch: Branch, t: f64, tau: f64, x_t: f64, cfg: &McConfig) -> Result<McEstimate> {
    let tau_e = model.ex_post(tau);
    if t > tau_e {
        return domain(format!("trading time {t} is after the end of delivery {tau_e}"));
    }
    let (alpha, beta) = model.supply.branch(branch);
    let g = model.g.value(tau_e);
    estimate(cfg, 1, 2, |z| {
        let x = ou_step(&model.ou, x_t, tau_e - t, cfg.drift_bias, z[0]);
        Ok((alpha * (g + x - beta)).exp())
    })
}

/// `E_Q[I(τ) | X_{τ-δ}]`, which should equal `e^{rδ} S(τ)`.
pub fn mc_intraday_from_day_ahead(model: &ModelQ<f64>, tau: f64, x_day_ahead: f64, cfg: &McConfig) -> Result<McEstimate> {
    let delta = model.conv.delta;
    if tau < delta {
        return domain(format!("day-ahead state needs tau >= delta (tau={tau}, delta={delta})"));
    }
    estimate(cfg, 1, 3, |z| {
        let x = ou_step(&model.ou, x_day_ahead, delta, cfg.drift_bias, z[0]);
        intraday_price(model, tau, x)
    })
}

/// `E_Q[(e^{-r(δ+ε)}/n) Σ p(τ_i) | X_t]` for `t ≤ τ_1 - δ`.
pub fn mc_futures(model: &ModelQ<f64>, t: f64, deliveries: &DeliverySet<f64>, x_t: f64, cfg: &McConfig) -> Result<McEstimate> {
    if t > deliveries.first().tau() - model.conv.delta {
        return domain("futures oracle needs t before the first day-ahead fixing");
    }
    let ends: Vec<(f64, f64, f64)> = deliveries
        .iter()
        .map(|d| (d.tau(), model.ex_post(d.tau()), model.g.value(model.ex_post(d.tau()))))
        .collect();
    let w = futures_weight(&model.conv) / ends.len() as f64;
    estimate(cfg, ends.len(), 4, |z| {
        let (mut s, mut x) = (t, x_t);
        let mut sum = 0.0;
        for ((tau, tau_e, g), zi) in ends.iter().zip(z) {
            x = ou_step(&model.ou, x, tau_e - s, cfg.drift_bias, *zi);
            s = *tau_e;
            sum += intrinsic_price(model, g + x, *tau)?;
        }
        Ok(w * sum)
    })
}

/// Two Monte Carlo estimates of the same risk premium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumEstimates {
    /// Real-world state simulated directly.
    pub direct: McEstimate,
    /// Risk-neutral paths weighted by the density `ν`.
    pub density: McEstimate,
}

impl PremiumEstimates {
    /// `|direct - density| ≤ k` joint standard errors.
    pub fn consistent(&self, k: f64) -> bool {
        let se = (self.direct.std_error.powi(2) + self.density.std_error.powi(2)).sqrt();
        let d = (self.direct.mean - self.density.mean).abs();
        if se == 0.0 {
            d <= 1e-12 * self.direct.mean.abs().max(1.0)
        } else {
            d <= k * se
        }
    }
}

/// `f_t(τ) - E_P[f_τ(τ) | F_t]` by two estimators.
///
/// The forward is evaluated at the risk-neutral state `x̃_t + shift(t)`; the
/// real-world expectation of the intraday forward `f_τ(τ) = e^{rε} I(τ)` is
/// estimated (a) by simulating `X̃` as a zero-mean OU process under `P` and
/// adding `shift(τ)`, and (b) by simulating `X` under `Q` and weighting with
/// the density of the Girsanov kernel belonging to `mode`.
pub fn mc_risk_premium(
    model: &ModelQ<f64>,
    theta: f64,
    t: f64,
    tau: f64,
    x_tilde_t: f64,
    mode: ShiftMode,
    cfg: &McConfig,
) -> Result<PremiumEstimates> {
    if t > tau {
        return domain(format!("premium oracle needs t <= tau (t={t}, tau={tau})"));
    }
    let ou = &model.ou;
    let x_t = x_tilde_t + level_shift(ou, theta, t, mode);
    let f_t = forward_price(model, t, tau, x_t)?;
    let grow = model.conv.growth(model.conv.epsilon);
    let shift_tau = level_shift(ou, theta, tau, mode);
    let h = tau - t;

    let direct = estimate(cfg, 1, 5, |z| {
        let xt = ou_step(ou, x_tilde_t, h, cfg.drift_bias, z[0]);
        Ok(grow * intraday_price(model, tau, xt + shift_tau)?)
    })?;

    let density = if h == 0.0 {
        McEstimate {
            mean: grow * intraday_price(model, tau, x_t)?,
            std_error: 0.0,
            n_paths: cfg.n_paths,
        }
    } else {
        let sampler = DensitySampler::new(ou, LinearKernel::for_mode(ou, theta, mode), t, h)?;
        let bias_shift = biased_mean(ou, 0.0, h, cfg.drift_bias);
        estimate(cfg, 3, 6, |z| {
            let (x, nu) = sampler.map(x_t, [z[0], z[1], z[2]]);
            Ok(nu * grow * intraday_price(model, tau, x + bias_shift)?)
        })?
    };
    Ok(PremiumEstimates {
        direct: direct.subtracted_from(f_t),
        density: density.subtracted_from(f_t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payoff {
    Call,
    Put,
}

impl Payoff {
    #[inline]
    pub fn value(self, underlying: f64, strike: f64) -> f64 {
        match self {
            Payoff::Call => (underlying - strike).max(0.0),
            Payoff::Put => (strike - underlying).max(0.0),
        }
    }
}

/// Terminal distribution of the futures price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptionDistribution {
    /// `F_t = F_u + σ_{u,t} Z`.
    Normal(NormalOptionInputs),
    /// `F_t = F_u exp(-v/2 + √v Z)`.
    Lognormal(LognormalOptionInputs),
}

/// Discounted expected payoff. The drift bias shifts `F_t` by `bias · span`
/// in the normal case and `ln F_t` by the same amount in the lognormal case.
pub fn mc_option(dist: &OptionDistribution, payoff: Payoff, cfg: &McConfig) -> Result<McEstimate> {
    match *dist {
        OptionDistribution::Normal(i) => {
            if !(i.sigma_ut >= 0.0) {
                return domain("sigma_ut must be >= 0");
            }
            let df = (-i.rate * i.span).exp();
            let drift = cfg.drift_bias * i.span;
            estimate(cfg, 1, 7, |z| Ok(df * payoff.value(i.forward + drift + i.sigma_ut * z[0], i.strike)))
        }
        OptionDistribution::Lognormal(i) => {
            if !(i.forward > 0.0) || !(i.variance >= 0.0) {
                return domain("lognormal option needs F > 0 and variance >= 0");
            }
            let df = (-i.rate * i.span).exp();
            let sd = i.variance.sqrt();
            let drift = cfg.drift_bias * i.span - 0.5 * i.variance;
            estimate(cfg, 1, 8, |z| Ok(df * payoff.value(i.forward * (drift + sd * z[0]).exp(), i.strike)))
        }
    }
}

/// A one-dimensional Markov state and its exact transition.
pub trait Transition: Sync {
    /// State at `u` given `x` at `t`, driven by one standard normal `z`.
    fn step(&self, t: f64, x: f64, u: f64, z: f64, bias: f64) -> Result<f64>;
}

impl Transition for OuParams<f64> {
    fn step(&self, t: f64, x: f64, u: f64, z: f64, bias: f64) -> Result<f64> {
        Ok(ou_step(self, x, u - t, bias, z))
    }
}

/// Log of a lognormal forward `f_t = f_0 exp(-½∫σ² ds + ∫σ dW)` with
/// deterministic volatility `σ_s`, on a fixed grid of times. The integrated
/// variance between grid times is computed once.
pub struct LogForward {
    grid: Vec<f64>,
    /// `∫ σ² ds` from `grid[0]` to each grid time.
    cumulative: Vec<f64>,
}

impl LogForward {
    pub fn on_grid(vol: impl Fn(f64) -> f64, grid: &[f64]) -> Result<Self> {
        if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("lognormal grid must be non-empty and strictly increasing");
        }
        let mut cumulative = vec![0.0];
        for w in grid.windows(2) {
            let v = integrate(|s| Ok(vol(s).powi(2)), w[0], w[1], 1e-10)?;
            cumulative.push(cumulative.last().copied().unwrap_or(0.0) + v);
        }
        Ok(Self {
            grid: grid.to_vec(),
            cumulative,
        })
    }

    fn at(&self, t: f64) -> Result<f64> {
        match self.grid.iter().position(|g| *g == t) {
            Some(k) => Ok(self.cumulative[k]),
            None => domain(format!("time {t} is not on the lognormal grid")),
        }
    }
}

impl Transition for LogForward {
    fn step(&self, t: f64, x: f64, u: f64, z: f64, bias: f64) -> Result<f64> {
        let v = self.at(u)? - self.at(t)?;
        Ok(x - 0.5 * v + bias * (u - t) + v.sqrt() * z)
    }
}

/// One step of a nested martingale check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleStep {
    pub t: f64,
    pub u: f64,
    /// Estimate of `E[V_u | state at t] - V_t`, averaged over outer states.
    pub gap: McEstimate,
}

impl MartingaleStep {
    pub fn passes(&self, k: f64) -> bool {
        self.gap.agrees(0.0, k)
    }
}

/// Nested check that `value(t, state)` is a martingale along `times`.
///
/// For each consecutive pair `(t, u)` the outer simulation draws the state at
/// `t` from `(times[0], x0)`, and `cfg.inner_paths` inner draws estimate the
/// conditional mean of `value(u, ·)`. The reported gap should be zero.
pub fn mc_martingale_check_with<S, V>(
    state: &S,
    value: V,
    times: &[f64],
    x0: f64,
    cfg: &McConfig,
) -> Result<Vec<MartingaleStep>>
where
    S: Transition,
    V: Fn(f64, f64) -> Result<f64> + Sync,
{
    if times.len() < 2 {
        return domain("martingale check needs at least two times");
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return domain(format!("times must be strictly increasing ({} then {})", w[0], w[1]));
    }
    let t0 = times[0];
    let inner = cfg.inner_paths;
    times
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (t, u) = (w[0], w[1]);
            let gap = estimate(cfg, 1 + inner, 100 + k as u64, |z| {
                let xt = if t > t0 { state.step(t0, x0, t, z[0], cfg.drift_bias)? } else { x0 };
                let mut acc = 0.0;
                for zi in &z[1..] {
                    acc += value(u, state.step(t, xt, u, *zi, cfg.drift_bias)?)?;
                }
                Ok(acc / inner as f64 - value(t, xt)?)
            })?;
            Ok(MartingaleStep { t, u, gap })
        })
        .collect()
}

/// Nested martingale check of the forward `f_t(τ)` along `times`.
pub fn mc_martingale_check(model: &ModelQ<f64>, times: &[f64], tau: f64, x0: f64, cfg: &McConfig) -> Result<Vec<MartingaleStep>> {
    let tau_e = model.ex_post(tau);
    if times.iter().any(|&t| t > tau_e) {
        return domain(format!("martingale times must not exceed the end of delivery {tau_e}"));
    }
    mc_martingale_check_with(&model.ou, |t, x| forward_price(model, t, tau, x), times, x0, cfg)
}

/// Discretisation of `∫ φ dW` in the pathwise check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    /// Euler plus `½ σ² ∂²f/∂x² (ΔW² - h)`.
    Milstein,
}

/// Mean absolute difference between the exact forward increment
/// `f_{t0+span}(τ) - f_{t0}(τ)` and the discretised `∫ φ dW` on steps of
/// `cfg.time_step`, over `cfg.n_paths` paths.
///
/// The state and Brownian increments are sampled jointly and exactly on the
/// grid, so the whole error comes from the scheme.
pub fn pathwise_ito_error(
    model: &ModelQ<f64>,
    t0: f64,
    span: f64,
    tau: f64,
    x0: f64,
    scheme: Scheme,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let tau_e = model.ex_post(tau);
    if !(span > 0.0) || t0 + span > tau_e {
        return domain("pathwise window must be non-empty and end before delivery ends");
    }
    let steps = (span / cfg.time_step).round() as usize;
    if steps == 0 || ((steps as f64) * cfg.time_step - span).abs() > 1e-9 * span {
        return domain(format!("time step {} does not divide the window {span}", cfg.time_step));
    }
    let h = span / steps as f64;
    let l = model.ou.lambda;
    let sigma = model.ou.sigma;
    // joint (ΔW, ∫ e^{-λ(h-u)} dW) over one step
    let e1 = crate::scalar::one_minus_exp_neg(l * h);
    let e2 = crate::scalar::one_minus_exp_neg(2.0 * l * h);
    let (c11, c12, c22) = (h, e1 / l, e2 / (2.0 * l));
    let l11 = c11.sqrt();
    let l21 = c12 / l11;
    let l22 = (c22 - l21 * l21).max(0.0).sqrt();
    let decay = (-l * h).exp();
    let (a1, a2) = (model.supply.alpha1, model.supply.alpha2);
    let f_start = forward_price(model, t0, tau, x0)?;
    let rng_seed = cfg.seed;
    let cfg_paths = McConfig {
        antithetic: false,
        seed: rng_seed,
        ..*cfg
    };
    estimate(&cfg_paths, 2 * steps, 9, |z| {
        let mut x = x0;
        let mut s = t0;
        let mut integral = 0.0;
        for k in 0..steps {
            let dw = l11 * z[2 * k];
            let m = l21 * z[2 * k] + l22 * z[2 * k + 1];
            let phi = price_generating(model, s, tau, x)?;
            integral += phi * dw;
            if scheme == Scheme::Milstein {
                let w = (-l * (tau_e - s)).exp();
                let g1 = gamma_aux(model, Branch::Scarcity, s, tau, x)?;
                let g2 = gamma_aux(model, Branch::Surplus, s, tau, x)?;
                let fxx = w * w * (a1 * a1 * g1 - a2 * a2 * g2);
                integral += 0.5 * sigma * sigma * fxx * (dw * dw - h);
            }
            x = decay * x + sigma * m;
            s += h;
        }
        let f_end = forward_price(model, t0 + span, tau, x)?;
        Ok((f_end - f_start - integral).abs())
    })
}

/// One line of an oracle report.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLine {
    pub quantity: String,
    pub closed_form: f64,
    pub estimate: McEstimate,
}

impl OracleLine {
    pub fn new(quantity: impl Into<String>, closed_form: f64, estimate: McEstimate) -> Self {
        Self {
            quantity: quantity.into(),
            closed_form,
            estimate,
        }
    }

    pub fn z(&self) -> f64 {
        self.estimate.z_score(self.closed_form)
    }

    pub fn passes(&self) -> bool {
        self.z().abs() <= 3.0
    }
}

impl fmt::Display for OracleLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<40} closed={:<22.15e} mc={:<22.15e} se={:<12.4e} z={:>8.3} {}",
            self.quantity,
            self.closed_form,
            self.estimate.mean,
            self.estimate.std_error,
            self.z(),
            if self.passes() { "PASS" } else { "FAIL" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conventions::MarketConventions;
    use crate::seasonality::{Calendar, SeasonalityModel};
    use crate::structural::SupplyParams;
    use chrono::NaiveDate;
    use std::sync::Arc;

    fn model(sigma: f64) -> ModelQ<f64> {
        let epoch = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let cal = Arc::new(Calendar::default());
        ModelQ::new(
            OuParams::new(0.0298, sigma, -12.5776).unwrap(),
            SupplyParams::new(0.1949, -0.1796, 43.8799, 37.4548).unwrap(),
            SeasonalityModel::constant(52.0, epoch, cal.clone()),
            SeasonalityModel::constant(30.0, epoch, cal),
            MarketConventions::default(),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(McConfig::default().with_paths(1).validate().is_err());
        assert!(McConfig { time_step: 0.0, ..Default::default() }.validate().is_err());
        assert!(McConfig::default().validate().is_ok());
    }

    #[test]
    fn merge_matches_direct_moments() {
        let cfg = McConfig::default().with_paths(10_000);
        let e = estimate(&cfg, 1, 0, |z| Ok(3.0 + 2.0 * z[0])).unwrap();
        assert!((e.mean - 3.0).abs() < 0.1);
        assert!((e.std_error - 0.02).abs() < 0.002);
    }

    #[test]
    fn deterministic_forward_without_noise() {
        let m = model(0.0);
        let cfg = McConfig::default().with_paths(1000);
        let e = mc_forward(&m, 100.0, 300.0, 2.0, &cfg).unwrap();
        assert_eq!(e.std_error, 0.0);
        let exact = forward_price(&m, 100.0, 300.0, 2.0).unwrap();
        assert!((e.mean - exact).abs() <= 1e-12 * exact.abs());
        assert!(e.agrees(exact, 3.0));
    }

    #[test]
    fn reproducible_across_runs() {
        let m = model(1.4988);
        let cfg = McConfig::default().with_paths(50_000);
        let a = mc_forward(&m, 100.0, 300.0, 2.0, &cfg).unwrap();
        let b = mc_forward(&m, 100.0, 300.0, 2.0, &cfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn forward_oracle_small() {
        let m = model(1.4988);
        let cfg = McConfig::default().with_paths(200_000);
        let e = mc_forward(&m, 100.0, 268.0, 3.0, &cfg).unwrap();
        let exact = forward_price(&m, 100.0, 268.0, 3.0).unwrap();
        assert!(e.agrees(exact, 3.0), "{} vs {exact}", e.mean);
    }

    #[test]
    fn oracle_line_format() {
        let line = OracleLine::new("forward", 1.0, McEstimate { mean: 1.0, std_error: 0.1, n_paths: 10 });
        let s = line.to_string();
        assert!(s.starts_with("forward") && s.ends_with("PASS"));
    }

    #[test]
    fn payoff_values() {
        assert_eq!(Payoff::Call.value(5.0, 3.0), 2.0);
        assert_eq!(Payoff::Put.value(5.0, 3.0), 0.0);
    }
}
