//! Change of measure between the risk-neutral measure `Q` and the real-world
//! measure `P`.
//!
//! With the constant Girsanov drift `θ_t ≡ λθ` the density
//! `ν_t = exp(∫ λθ dW - ½ ∫ (λθ)² ds)` turns the `Q`-Brownian motion `W` into
//! a `P`-Brownian motion `W - λθ t`, and the load deviation becomes
//!
//! ```text
//! dX = -λ (X - σθ) dt + σ dW^P
//! ```
//!
//! so `X = X̃ + (1 - e^{-λτ}) σθ` with `X̃` a zero-mean `P`-OU process. The
//! linearisation `(1 - e^{-λτ}) ≈ λτ` gives the first-order relations
//! `g̃ = g + λσθτ` and `X = X̃ + λσθτ`, which are what calibration uses.

#[cfg(test)]
use rand::Rng;
#[cfg(test)]
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ou::OuParams;
use crate::scalar::{one_minus_exp_neg, Scalar};
use crate::seasonality::{SaturatingOffset, SeasonalityModel};
use crate::structural::{gamma_from_center, Branch, ModelQ};

/// Constant Girsanov parameter; the drift applied to `W` is `λθ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GirsanovParam<T> {
    pub theta: T,
}

impl<T: Scalar> GirsanovParam<T> {
    pub fn new(theta: T) -> Result<Self> {
        if !theta.is_finite() {
            return domain(format!("Girsanov parameter must be finite, got {theta}"));
        }
        Ok(Self { theta })
    }

    /// `λθ`.
    #[inline]
    pub fn drift(&self, ou: &OuParams<T>) -> T {
        ou.lambda * self.theta
    }
}

/// How the `P`/`Q` level shift `X - X̃` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// `(1 - e^{-λτ}) σθ`.
    Exact,
    /// `λσθτ`.
    #[default]
    FirstOrder,
}

/// Level shift `X_τ - X̃_τ`.
pub fn level_shift<T: Scalar>(ou: &OuParams<T>, theta: T, tau: T, mode: ShiftMode) -> T {
    match mode {
        ShiftMode::Exact => one_minus_exp_neg(ou.lambda * tau) * ou.sigma * theta,
        ShiftMode::FirstOrder => ou.lambda * ou.sigma * theta * tau,
    }
}

/// Real-world seasonality value `g̃(τ)` from the risk-neutral value `g(τ)`.
pub fn g_tilde<T: Scalar>(g_at_tau: T, ou: &OuParams<T>, theta: T, tau: T, mode: ShiftMode) -> Result<T> {
    if !(tau >= T::zero()) {
        return domain(format!("g_tilde needs tau >= 0, got {tau}"));
    }
    Ok(g_at_tau + level_shift(ou, theta, tau, mode))
}

/// First-order map from the real-world state `x̃_τ` to the risk-neutral
/// state `x_τ = x̃_τ + λσθτ`.
pub fn ou_shift_p<T: Scalar>(x_tilde: T, ou: &OuParams<T>, theta: T, tau: T) -> Result<T> {
    ou_shift(x_tilde, ou, theta, tau, ShiftMode::FirstOrder)
}

pub fn ou_shift<T: Scalar>(x_tilde: T, ou: &OuParams<T>, theta: T, tau: T, mode: ShiftMode) -> Result<T> {
    if !(tau >= T::zero()) {
        return domain(format!("state shift needs tau >= 0, got {tau}"));
    }
    Ok(x_tilde + level_shift(ou, theta, tau, mode))
}

/// Risk-neutral seasonality `g` implied by a real-world fit `g̃`.
///
/// First order subtracts `λσθ` from the trend; exact mode subtracts the
/// saturating term `(1 - e^{-λτ}) σθ`.
pub fn risk_neutral_seasonality(
    g_tilde: &SeasonalityModel<f64>,
    ou: &OuParams<f64>,
    theta: f64,
    mode: ShiftMode,
) -> SeasonalityModel<f64> {
    match mode {
        ShiftMode::FirstOrder => g_tilde.clone().with_trend_shift(-ou.lambda * ou.sigma * theta),
        ShiftMode::Exact => g_tilde.clone().with_offset(SaturatingOffset {
            amount: -ou.sigma * theta,
            rate: ou.lambda,
        }),
    }
}

/// Density `ν` of `P` with respect to `Q` on a time grid, from the Brownian
/// increments between consecutive grid points. `ν[0] = 1`.
pub fn radon_nikodym<T: Scalar>(drift: T, w_increments: &[T], grid: &[T]) -> Result<Vec<T>> {
    if grid.len() != w_increments.len() + 1 {
        return domain(format!(
            "need one increment per grid step ({} grid points, {} increments)",
            grid.len(),
            w_increments.len()
        ));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return domain(format!("grid must be strictly increasing ({} then {})", w[0], w[1]));
    }
    let half = T::lit(0.5);
    let mut log_nu = T::zero();
    let mut out = Vec::with_capacity(grid.len());
    out.push(T::one());
    for (dw, w) in w_increments.iter().zip(grid.windows(2)) {
        log_nu = log_nu + drift * *dw - half * drift * drift * (w[1] - w[0]);
        out.push(log_nu.exp());
    }
    Ok(out)
}

/// `γ̃_i(t; τ)`, the real-world conditional expectation of `γ_i(τ; τ)`:
///
/// ```text
/// exp{α_i (g(τe) + e^{-λε}(1 - e^{-λτ}) σθ + e^{-λ(τe-t)} x̃_t
///          + α_i σ²/(4λ) (1 - e^{-2λ(τe-t)}) - β_i)}
/// ```
pub fn gamma_tilde_aux<T: Scalar>(
    model: &ModelQ<T>,
    theta: T,
    branch: Branch,
    t: T,
    tau: T,
    x_tilde_t: T,
) -> Result<T> {
    gamma_tilde_with(model, theta, branch, t, tau, x_tilde_t, ShiftMode::Exact)
}

/// `γ̃_i` with the drift term `e^{-λε} (X_τ - X̃_τ)` evaluated in `mode`.
pub fn gamma_tilde_with<T: Scalar>(
    model: &ModelQ<T>,
    theta: T,
    branch: Branch,
    t: T,
    tau: T,
    x_tilde_t: T,
    mode: ShiftMode,
) -> Result<T> {
    let tau_e = model.ex_post(tau);
    if t > tau_e {
        return domain(format!("trading time {t} is after the end of delivery {tau_e}"));
    }
    let drift = (-model.ou.lambda * model.conv.epsilon).exp() * level_shift(&model.ou, theta, tau, mode);
    let level = model.g.value(tau_e) + drift;
    gamma_from_center(model, branch, t, tau, level, x_tilde_t)
}

/// Risk premium `π_t(τ) = (γ1 - γ2) - (γ̃1 - γ̃2)`, with `γ_i` evaluated at
/// the risk-neutral state `x_t = x̃_t + shift(t)`. The same `mode` is used for
/// the state map and for the real-world drift inside `γ̃_i`.
pub fn risk_premium<T: Scalar>(
    model: &ModelQ<T>,
    theta: T,
    t: T,
    tau: T,
    x_tilde_t: T,
    mode: ShiftMode,
) -> Result<T> {
    if !(t >= T::zero()) {
        return domain(format!("trading time must be >= 0, got {t}"));
    }
    let x_t = ou_shift(x_tilde_t, &model.ou, theta, t, mode)?;
    premium_from_states(model, theta, t, tau, x_t, x_tilde_t, mode)
}

/// Premium with the first-order state map but the exact real-world drift
/// inside `γ̃_i`. The two halves do not describe the same measure, so this is
/// kept for comparison only.
pub fn risk_premium_mixed_shift<T: Scalar>(model: &ModelQ<T>, theta: T, t: T, tau: T, x_tilde_t: T) -> Result<T> {
    let x_t = ou_shift_p(x_tilde_t, &model.ou, theta, t)?;
    premium_from_states(model, theta, t, tau, x_t, x_tilde_t, ShiftMode::Exact)
}

fn premium_from_states<T: Scalar>(
    model: &ModelQ<T>,
    theta: T,
    t: T,
    tau: T,
    x_t: T,
    x_tilde_t: T,
    tilde_mode: ShiftMode,
) -> Result<T> {
    let tau_e = model.ex_post(tau);
    if t > tau_e {
        return domain(format!("trading time {t} is after the end of delivery {tau_e}"));
    }
    if theta == T::zero() {
        return Ok(T::zero());
    }
    let level = model.g.value(tau_e);
    let g1 = gamma_from_center(model, Branch::Scarcity, t, tau, level, x_t)?;
    let g2 = gamma_from_center(model, Branch::Surplus, t, tau, level, x_t)?;
    let h1 = gamma_tilde_with(model, theta, Branch::Scarcity, t, tau, x_tilde_t, tilde_mode)?;
    let h2 = gamma_tilde_with(model, theta, Branch::Surplus, t, tau, x_tilde_t, tilde_mode)?;
    Ok((g1 - g2) - (h1 - h2))
}

/// Girsanov kernel `θ_s = level + slope · s` in absolute time.
///
/// Exact mode has the constant kernel `λθ`. The first-order state map
/// `X = X̃ + λσθs` corresponds to `θ_s = λθ (1 + λs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LinearKernel {
    pub level: f64,
    pub slope: f64,
}

impl LinearKernel {
    pub fn for_mode(ou: &OuParams<f64>, theta: f64, mode: ShiftMode) -> Self {
        let d = ou.lambda * theta;
        match mode {
            ShiftMode::Exact => Self { level: d, slope: 0.0 },
            ShiftMode::FirstOrder => Self {
                level: d,
                slope: d * ou.lambda,
            },
        }
    }
}

/// Exact joint sampler of the risk-neutral state `X_{t+h}` and the log
/// density `ln ν` accumulated over `[t, t+h]` for a linear kernel.
///
/// Uses the Gaussian vector `(W_h, ∫u dW_u, ∫e^{-λ(h-u)} dW_u)` over
/// `u ∈ [0, h]`.
#[derive(Debug, Clone)]
pub(crate) struct DensitySampler {
    chol: [[f64; 3]; 3],
    mean_decay: f64,
    sigma: f64,
    // ln ν = c·A + slope·B - ½ ∫θ²
    coef_a: f64,
    coef_b: f64,
    compensator: f64,
}

impl DensitySampler {
    pub fn new(ou: &OuParams<f64>, kernel: LinearKernel, t: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return domain(format!("density sampler needs a positive horizon, got {h}"));
        }
        let l = ou.lambda;
        let e1 = one_minus_exp_neg(l * h);
        let e2 = one_minus_exp_neg(2.0 * l * h);
        let cov = [
            [h, h * h / 2.0, e1 / l],
            [h * h / 2.0, h * h * h / 3.0, h / l - e1 / (l * l)],
            [e1 / l, h / l - e1 / (l * l), e2 / (2.0 * l)],
        ];
        let m = nalgebra::Matrix3::from_fn(|i, j| cov[i][j]);
        let chol = nalgebra::Cholesky::new(m)
            .ok_or_else(|| crate::error::Error::Numeric(format!("joint covariance not positive definite at h={h}")))?
            .l();
        let c = kernel.level + kernel.slope * t;
        let b = kernel.slope;
        Ok(Self {
            chol: [
                [chol[(0, 0)], 0.0, 0.0],
                [chol[(1, 0)], chol[(1, 1)], 0.0],
                [chol[(2, 0)], chol[(2, 1)], chol[(2, 2)]],
            ],
            mean_decay: (-l * h).exp(),
            sigma: ou.sigma,
            coef_a: c,
            coef_b: b,
            compensator: 0.5 * (c * c * h + c * b * h * h + b * b * h * h * h / 3.0),
        })
    }

    /// Returns `(X_{t+h}, ν)` given `X_t = x`.
    #[cfg(test)]
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, f64) {
        let z: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        self.map(x, z)
    }

    pub fn map(&self, x: f64, z: [f64; 3]) -> (f64, f64) {
        let l = &self.chol;
        let a = l[0][0] * z[0];
        let b = l[1][0] * z[0] + l[1][1] * z[1];
        let c = l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2];
        let x_next = self.mean_decay * x + self.sigma * c;
        let log_nu = self.coef_a * a + self.coef_b * b - self.compensator;
        (x_next, log_nu.exp())
    }
}
