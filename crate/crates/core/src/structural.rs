//! Supply-curve structural model under the risk-neutral measure.
//!
//! The ex-post system load is `G_τ = g(τ) + X_τ` with `X` a zero-mean OU
//! process, and the intrinsic price for delivery `[τ, τ+ε)` is
//!
//! ```text
//! p(τ) = e^{α1 (G_{τe} - β1)} - e^{α2 (G_{τe} - β2)} + γ3(τ),   τe = τ + ε
//! ```
//!
//! Every contract price follows from the lognormal conditional moments of
//! `e^{α_i X_{τe}}`, packaged in the auxiliary processes `γ_i(t; τ)`.

use serde::{Deserialize, Serialize};

use crate::conventions::{DeliverySet, MarketConventions};
use crate::error::{domain, Error, Result};
use crate::ou::OuParams;
use crate::scalar::Scalar;
use crate::seasonality::SeasonalityModel;

/// Largest admissible magnitude of a supply-curve exponent.
pub const EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyParams<T> {
    /// Exponent of the scarcity branch, `> 0`.
    pub alpha1: T,
    /// Exponent of the surplus branch, `< 0`.
    pub alpha2: T,
    pub beta1: T,
    pub beta2: T,
}

impl<T: Scalar> SupplyParams<T> {
    pub fn new(alpha1: T, alpha2: T, beta1: T, beta2: T) -> Result<Self> {
        let s = Self {
            alpha1,
            alpha2,
            beta1,
            beta2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > T::zero()) {
            return domain(format!("alpha1 must be positive, got {}", self.alpha1));
        }
        if !(self.alpha2 < T::zero()) {
            return domain(format!("alpha2 must be negative, got {}", self.alpha2));
        }
        if !self.beta1.is_finite() || !self.beta2.is_finite() {
            return domain("beta parameters must be finite");
        }
        Ok(())
    }

    #[inline]
    pub fn branch(&self, b: Branch) -> (T, T) {
        match b {
            Branch::Scarcity => (self.alpha1, self.beta1),
            Branch::Surplus => (self.alpha2, self.beta2),
        }
    }

    /// `e^{α1 (G-β1)} - e^{α2 (G-β2)}`.
    pub fn curve(&self, load: T) -> Result<T> {
        let up = guarded_exp(self.alpha1 * (load - self.beta1), "scarcity branch")?;
        let down = guarded_exp(self.alpha2 * (load - self.beta2), "surplus branch")?;
        Ok(up - down)
    }
}

/// The two exponential branches of the supply curve (`i = 1, 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `α1 > 0`: steep rise at high load.
    Scarcity,
    /// `α2 < 0`: price floor at low load.
    Surplus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Scarcity, Branch::Surplus];
}

pub(crate) fn guarded_exp<T: Scalar>(arg: T, what: &str) -> Result<T> {
    let limit = T::lit(EXPONENT_LIMIT).min(T::max_value().ln() * T::lit(0.99));
    if !arg.is_finite() || arg.abs() > limit {
        return Err(Error::Numeric(format!(
            "{what}: exponent {arg} exceeds the admissible range ±{limit}"
        )));
    }
    Ok(arg.exp())
}

/// Structural model under the risk-neutral measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelQ<T> {
    pub ou: OuParams<T>,
    pub supply: SupplyParams<T>,
    /// Risk-neutral load seasonality `g`.
    pub g: SeasonalityModel<T>,
    /// Price seasonality `γ3`.
    pub gamma3: SeasonalityModel<T>,
    pub conv: MarketConventions<T>,
}

impl<T: Scalar> ModelQ<T> {
    pub fn new(
        ou: OuParams<T>,
        supply: SupplyParams<T>,
        g: SeasonalityModel<T>,
        gamma3: SeasonalityModel<T>,
        conv: MarketConventions<T>,
    ) -> Result<Self> {
        ou.validate()?;
        supply.validate()?;
        conv.validate()?;
        Ok(Self {
            ou,
            supply,
            g,
            gamma3,
            conv,
        })
    }

    #[inline]
    pub fn ex_post(&self, tau: T) -> T {
        tau + self.conv.epsilon
    }

    pub fn with_conventions(mut self, conv: MarketConventions<T>) -> Self {
        self.conv = conv;
        self
    }

    pub fn with_ou(mut self, ou: OuParams<T>) -> Self {
        self.ou = ou;
        self
    }

    pub fn with_supply(mut self, supply: SupplyParams<T>) -> Self {
        self.supply = supply;
        self
    }

    pub fn cast<U: Scalar>(&self) -> ModelQ<U> {
        let c = |v: T| U::lit(v.as_f64());
        ModelQ {
            ou: OuParams {
                lambda: c(self.ou.lambda),
                sigma: c(self.ou.sigma),
                x0: c(self.ou.x0),
            },
            supply: SupplyParams {
                alpha1: c(self.supply.alpha1),
                alpha2: c(self.supply.alpha2),
                beta1: c(self.supply.beta1),
                beta2: c(self.supply.beta2),
            },
            g: self.g.cast(),
            gamma3: self.gamma3.cast(),
            conv: MarketConventions {
                epsilon: c(self.conv.epsilon),
                delta: c(self.conv.delta),
                annual_rate: c(self.conv.annual_rate),
                hours_per_year: c(self.conv.hours_per_year),
            },
        }
    }
}

fn check_trading_time<T: Scalar>(t: T, tau_e: T) -> Result<()> {
    if t > tau_e {
        return domain(format!(
            "trading time {t} is after the end of delivery {tau_e}"
        ));
    }
    Ok(())
}

/// Intrinsic price given the realised ex-post load `G_{τe}`.
pub fn intrinsic_price<T: Scalar>(model: &ModelQ<T>, load_at_tau_e: T, tau: T) -> Result<T> {
    Ok(model.supply.curve(load_at_tau_e)? + model.gamma3.value(tau))
}

/// `γ_i(t; τ) = exp{α_i (g(τe) + e^{-λ(τe-t)} x_t + α_i σ²/(4λ) (1 - e^{-2λ(τe-t)}) - β_i)}`.
pub fn gamma_aux<T: Scalar>(model: &ModelQ<T>, branch: Branch, t: T, tau: T, x_t: T) -> Result<T> {
    let tau_e = model.ex_post(tau);
    check_trading_time(t, tau_e)?;
    gamma_from_center(model, branch, t, tau, model.g.value(tau_e), x_t)
}

/// `γ_i` with the deterministic load level `g(τe)` supplied by the caller.
pub(crate) fn gamma_from_center<T: Scalar>(
    model: &ModelQ<T>,
    branch: Branch,
    t: T,
    tau: T,
    level: T,
    x_t: T,
) -> Result<T> {
    let (alpha, beta) = model.supply.branch(branch);
    let horizon = model.ex_post(tau) - t;
    let decay = (-model.ou.lambda * horizon).exp();
    let convexity = alpha * model.ou.variance(horizon) / T::lit(2.0);
    let arg = alpha * (level + decay * x_t + convexity - beta);
    guarded_exp(arg, match branch {
        Branch::Scarcity => "gamma_1",
        Branch::Surplus => "gamma_2",
    })
}

/// Forward price `f_t(τ) = γ1 - γ2 + γ3(τ)`, an undiscounted risk-neutral
/// expectation of the intrinsic price.
pub fn forward_price<T: Scalar>(model: &ModelQ<T>, t: T, tau: T, x_t: T) -> Result<T> {
    let g1 = gamma_aux(model, Branch::Scarcity, t, tau, x_t)?;
    let g2 = gamma_aux(model, Branch::Surplus, t, tau, x_t)?;
    Ok(g1 - g2 + model.gamma3.value(tau))
}

/// Tradable price `p_t(τ) = e^{-r(τe-t)} f_t(τ)`.
pub fn tradable_price<T: Scalar>(model: &ModelQ<T>, t: T, tau: T, x_t: T) -> Result<T> {
    let f = forward_price(model, t, tau, x_t)?;
    Ok((-model.conv.hourly_rate() * (model.ex_post(tau) - t)).exp() * f)
}

/// Intraday price `I(τ) = p_τ(τ)`.
pub fn intraday_price<T: Scalar>(model: &ModelQ<T>, tau: T, x_tau: T) -> Result<T> {
    tradable_price(model, tau, tau, x_tau)
}

/// Day-ahead price `S(τ) = p_{τ-δ}(τ)`, given the state one day ahead.
pub fn day_ahead_price<T: Scalar>(model: &ModelQ<T>, tau: T, x_at_tau_minus_delta: T) -> Result<T> {
    if tau < model.conv.delta {
        return domain(format!(
            "day-ahead price needs tau >= delta (tau={tau}, delta={})",
            model.conv.delta
        ));
    }
    tradable_price(model, tau - model.conv.delta, tau, x_at_tau_minus_delta)
}

/// Martingale integrand `φ_t(τ) = σ e^{-λ(τe-t)} [α1 γ1 - α2 γ2]`, zero
/// after delivery.
pub fn price_generating<T: Scalar>(model: &ModelQ<T>, t: T, tau: T, x_t: T) -> Result<T> {
    let tau_e = model.ex_post(tau);
    if t > tau_e {
        return Ok(T::zero());
    }
    let g1 = gamma_aux(model, Branch::Scarcity, t, tau, x_t)?;
    let g2 = gamma_aux(model, Branch::Surplus, t, tau, x_t)?;
    let s = &model.supply;
    Ok(model.ou.sigma * (-model.ou.lambda * (tau_e - t)).exp() * (s.alpha1 * g1 - s.alpha2 * g2))
}

/// Futures price `(e^{-r(δ+ε)}/n) Σ f_{t∧(τ_i-δ)}(τ_i)`.
///
/// `stopped_states[i]` is the OU state at `t ∧ (τ_i - δ)`; see
/// [`DeliverySet::stopped_times`].
pub fn futures_price<T: Scalar>(
    model: &ModelQ<T>,
    t: T,
    deliveries: &DeliverySet<T>,
    stopped_states: &[T],
) -> Result<T> {
    if stopped_states.len() != deliveries.len() {
        return domain(format!(
            "futures price needs one stopped state per delivery ({} deliveries, {} states)",
            deliveries.len(),
            stopped_states.len()
        ));
    }
    let times = deliveries.stopped_times(t, &model.conv);
    let mut sum = T::zero();
    for ((d, s), x) in deliveries.iter().zip(times).zip(stopped_states) {
        sum = sum + forward_price(model, s, d.tau(), *x)?;
    }
    let n = T::from_usize(deliveries.len()).expect("delivery count");
    Ok(futures_weight(&model.conv) * sum / n)
}

/// Forward prices of a fixed set of delivery hours with the seasonal levels
/// `g(τe)` and `γ3(τ)` evaluated once, for loops over many states.
#[derive(Debug, Clone)]
pub struct LevelCache<'a, T> {
    model: &'a ModelQ<T>,
    /// `(τ, g(τe), γ3(τ))` per delivery.
    items: Vec<(T, T, T)>,
}

impl<'a, T: Scalar> LevelCache<'a, T> {
    pub fn new(model: &'a ModelQ<T>, taus: impl IntoIterator<Item = T>) -> Self {
        let items = taus
            .into_iter()
            .map(|tau| (tau, model.g.value(model.ex_post(tau)), model.gamma3.value(tau)))
            .collect();
        Self { model, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `f_t(τ_i)`, equal to [`forward_price`] at the `i`-th delivery.
    pub fn forward(&self, i: usize, t: T, x_t: T) -> Result<T> {
        let (tau, level, g3) = self.items[i];
        check_trading_time(t, self.model.ex_post(tau))?;
        let g1 = gamma_from_center(self.model, Branch::Scarcity, t, tau, level, x_t)?;
        let g2 = gamma_from_center(self.model, Branch::Surplus, t, tau, level, x_t)?;
        Ok(g1 - g2 + g3)
    }

    /// [`futures_price`] over all cached deliveries with one common state,
    /// valid while `t` is before every day-ahead fixing.
    pub fn futures_before_fixing(&self, t: T, x_t: T) -> Result<T> {
        let mut sum = T::zero();
        for (i, (tau, _, _)) in self.items.iter().enumerate() {
            if t > *tau - self.model.conv.delta {
                return domain(format!("trading time {t} is after the day-ahead fixing of {tau}"));
            }
            sum = sum + self.forward(i, t, x_t)?;
        }
        let n = T::from_usize(self.items.len()).expect("delivery count");
        Ok(futures_weight(&self.model.conv) * sum / n)
    }
}

/// `e^{-r(δ+ε)}`.
pub fn futures_weight<T: Scalar>(conv: &MarketConventions<T>) -> T {
    (-conv.hourly_rate() * (conv.delta + conv.epsilon)).exp()
}

/// Deterministic integrand obtained by freezing the state on its
/// conditional-mean path `x_s = x_ref e^{-λ(s - t_ref)}` from `(t_ref, x_ref)`.
pub fn frozen_phi<T: Scalar>(model: &ModelQ<T>, tau: T, t_ref: T, x_ref: T) -> impl Fn(T) -> Result<T> + '_ {
    move |s: T| {
        let x = x_ref * (-model.ou.lambda * (s - t_ref)).exp();
        price_generating(model, s, tau, x)
    }
}

/// Futures integrand `(e^{-r(δ+ε)}/n) Σ φ_s(τ_i)` frozen as in [`frozen_phi`].
pub fn frozen_futures_phi<'a, T: Scalar>(
    model: &'a ModelQ<T>,
    deliveries: &'a DeliverySet<T>,
    t_ref: T,
    x_ref: T,
) -> impl Fn(T) -> Result<T> + 'a {
    move |s: T| {
        let x = x_ref * (-model.ou.lambda * (s - t_ref)).exp();
        let mut sum = T::zero();
        for d in deliveries.iter() {
            sum = sum + price_generating(model, s, d.tau(), x)?;
        }
        let n = T::from_usize(deliveries.len()).expect("delivery count");
        Ok(futures_weight(&model.conv) * sum / n)
    }
}
