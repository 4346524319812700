//! The standard set of closed-form versus Monte Carlo comparisons.
//!
//! One [`OracleSetup`] fixes a model, trading times, states and contracts;
//! [`oracle_suite`] prices every quantity both ways and [`martingale_suite`]
//! runs the nested martingale checks. With a nonzero `drift_bias` in the
//! Monte Carlo configuration every line is expected to fail, which shows
//! that the comparisons can detect a wrong drift.

use crate::conventions::DeliverySet;
use crate::error::Result;
use crate::mc::{
    mc_forward, mc_futures, mc_intraday_from_day_ahead, mc_martingale_check_with, mc_option,
    mc_risk_premium, mc_tradable, LogForward, MartingaleStep, McConfig, OptionDistribution, OracleLine, Payoff,
};
use crate::measure::{risk_premium, ShiftMode};
use crate::numerics::integrate;
use crate::options::{
    bachelier_call, bachelier_put, black76_call, black76_put, sigma_ut, Black76Variant, LognormalOptionInputs,
    NormalOptionInputs, QUADRATURE_TOL,
};
use crate::structural::{
    day_ahead_price, forward_price, frozen_futures_phi, futures_price, intraday_price, tradable_price, LevelCache, ModelQ,
};

#[derive(Debug, Clone)]
pub struct OracleSetup {
    pub model: ModelQ<f64>,
    pub theta: f64,
    pub mode: ShiftMode,
    /// Delivery hour priced by the single-hour checks.
    pub tau: f64,
    /// Trading time and risk-neutral state for forward and tradable prices.
    pub t: f64,
    pub x_t: f64,
    /// Real-world state and trading time for the risk premium.
    pub premium_t: f64,
    pub x_tilde: f64,
    /// Futures delivery period.
    pub deliveries: DeliverySet<f64>,
    /// Option start `u` (state `x_t`), expiry and strike offset from `F_u`.
    pub option_start: f64,
    pub option_expiry: f64,
    pub strike_offset: f64,
    pub variant: Black76Variant,
}

impl OracleSetup {
    /// Noon of `day` (days since the epoch) as delivery hour, one day of
    /// hourly deliveries for the futures, and options from a week before
    /// delivery to the first day-ahead fixing.
    pub fn standard(model: ModelQ<f64>, theta: f64, day: usize) -> Result<Self> {
        let start = 24.0 * day as f64;
        let tau = start + 12.0;
        let delta = model.conv.delta;
        let deliveries = DeliverySet::new((0..24).map(|h| start + h as f64))?;
        Ok(Self {
            model,
            theta,
            mode: ShiftMode::FirstOrder,
            tau,
            t: tau - 48.0,
            x_t: -3.0,
            premium_t: tau - 500.0,
            x_tilde: -3.0,
            deliveries,
            option_start: start - delta - 7.0 * 24.0,
            option_expiry: start - delta,
            strike_offset: 1.0,
            variant: Black76Variant::Conventional,
        })
    }

    fn states(&self) -> Vec<f64> {
        vec![self.x_t; self.deliveries.len()]
    }

    /// Futures price at the option start.
    pub fn futures_at_start(&self) -> Result<f64> {
        futures_price(&self.model, self.option_start, &self.deliveries, &self.states())
    }

    /// Normal option inputs with the integrand frozen on the mean path.
    pub fn normal_inputs(&self) -> Result<NormalOptionInputs> {
        let f = self.futures_at_start()?;
        let phi = frozen_futures_phi(&self.model, &self.deliveries, self.option_start, self.x_t);
        Ok(NormalOptionInputs {
            forward: f,
            strike: f + self.strike_offset,
            sigma_ut: sigma_ut(phi, self.option_start, self.option_expiry)?,
            span: self.option_expiry - self.option_start,
            rate: self.model.conv.hourly_rate(),
        })
    }

    /// Relative volatility `φ_s / F_u` of the frozen integrand.
    pub fn relative_vol(&self) -> Result<impl Fn(f64) -> f64 + Sync + '_> {
        let f = self.futures_at_start()?;
        let phi = frozen_futures_phi(&self.model, &self.deliveries, self.option_start, self.x_t);
        // integrand errors only arise outside the trading window
        Ok(move |s: f64| phi(s).unwrap_or(0.0) / f)
    }

    pub fn lognormal_inputs(&self) -> Result<LognormalOptionInputs> {
        let f = self.futures_at_start()?;
        let vol = self.relative_vol()?;
        let variance = integrate(|s| Ok(vol(s).powi(2)), self.option_start, self.option_expiry, QUADRATURE_TOL)?;
        Ok(LognormalOptionInputs {
            forward: f,
            strike: f + self.strike_offset,
            variance,
            span: self.option_expiry - self.option_start,
            rate: self.model.conv.hourly_rate(),
        })
    }
}

/// Every closed-form price against its Monte Carlo estimate.
pub fn oracle_suite(s: &OracleSetup, cfg: &McConfig) -> Result<Vec<OracleLine>> {
    let m = &s.model;
    let conv = &m.conv;
    let mut out = Vec::new();

    out.push(OracleLine::new("forward f_t", forward_price(m, s.t, s.tau, s.x_t)?, mc_forward(m, s.t, s.tau, s.x_t, cfg)?));
    out.push(OracleLine::new(
        "tradable p_t",
        tradable_price(m, s.t, s.tau, s.x_t)?,
        mc_tradable(m, s.t, s.tau, s.x_t, cfg)?,
    ));
    out.push(OracleLine::new(
        "intraday I",
        intraday_price(m, s.tau, s.x_t)?,
        mc_tradable(m, s.tau, s.tau, s.x_t, cfg)?,
    ));
    let grow_delta = conv.growth(conv.delta);
    out.push(OracleLine::new(
        "day-ahead S (grown by e^{r delta})",
        grow_delta * day_ahead_price(m, s.tau, s.x_t)?,
        mc_intraday_from_day_ahead(m, s.tau, s.x_t, cfg)?,
    ));
    out.push(OracleLine::new(
        "futures F_t",
        futures_price(m, s.option_start, &s.deliveries, &s.states())?,
        mc_futures(m, s.option_start, &s.deliveries, s.x_t, cfg)?,
    ));

    let pi = risk_premium(m, s.theta, s.premium_t, s.tau, s.x_tilde, s.mode)?;
    let est = mc_risk_premium(m, s.theta, s.premium_t, s.tau, s.x_tilde, s.mode, cfg)?;
    out.push(OracleLine::new("risk premium (real-world paths)", pi, est.direct));
    out.push(OracleLine::new("risk premium (density weights)", pi, est.density));

    let normal = s.normal_inputs()?;
    let nd = OptionDistribution::Normal(normal);
    out.push(OracleLine::new("normal call", bachelier_call(&normal)?, mc_option(&nd, Payoff::Call, cfg)?));
    out.push(OracleLine::new("normal put", bachelier_put(&normal)?, mc_option(&nd, Payoff::Put, cfg)?));

    let logn = s.lognormal_inputs()?;
    let ld = OptionDistribution::Lognormal(logn);
    out.push(OracleLine::new(
        "lognormal call",
        black76_call(&logn, s.variant)?,
        mc_option(&ld, Payoff::Call, cfg)?,
    ));
    out.push(OracleLine::new(
        "lognormal put",
        black76_put(&logn, s.variant)?,
        mc_option(&ld, Payoff::Put, cfg)?,
    ));
    Ok(out)
}

/// Named nested martingale checks.
pub struct MartingaleReport {
    pub name: &'static str,
    pub steps: Vec<MartingaleStep>,
}

impl MartingaleReport {
    pub fn passes(&self, k: f64) -> bool {
        self.steps.iter().all(|st| st.passes(k))
    }
}

/// Forward, discounted tradable price, futures price and the lognormal
/// forward, each along four trading times.
pub fn martingale_suite(s: &OracleSetup, cfg: &McConfig) -> Result<Vec<MartingaleReport>> {
    let m = &s.model;
    let r = m.conv.hourly_rate();
    let single: Vec<f64> = (0..4).map(|k| s.t + 12.0 * k as f64).collect();
    let before_fixing: Vec<f64> = (0..4)
        .map(|k| s.option_start + (s.option_expiry - s.option_start) * k as f64 / 3.0)
        .collect();

    let hour = LevelCache::new(m, [s.tau]);
    let forward = mc_martingale_check_with(&m.ou, |t, x| hour.forward(0, t, x), &single, s.x_t, cfg)?;
    let tau_e = m.ex_post(s.tau);
    let tradable = mc_martingale_check_with(
        &m.ou,
        |t, x| Ok((-r * t).exp() * (-r * (tau_e - t)).exp() * hour.forward(0, t, x)?),
        &single,
        s.x_t,
        cfg,
    )?;
    let day = LevelCache::new(m, s.deliveries.iter().map(|d| d.tau()));
    let futures = mc_martingale_check_with(
        &m.ou,
        |t, x| day.futures_before_fixing(t, x),
        &before_fixing,
        s.x_t,
        cfg,
    )?;
    let vol = s.relative_vol()?;
    let lognormal = mc_martingale_check_with(
        &LogForward::on_grid(vol, &before_fixing)?,
        |_, x| Ok(x.exp()),
        &before_fixing,
        s.futures_at_start()?.ln(),
        cfg,
    )?;
    Ok(vec![
        MartingaleReport {
            name: "forward f_t",
            steps: forward,
        },
        MartingaleReport {
            name: "discounted tradable e^{-rt} p_t",
            steps: tradable,
        },
        MartingaleReport {
            name: "futures F_t",
            steps: futures,
        },
        MartingaleReport {
            name: "lognormal forward",
            steps: lognormal,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{reference_spec, ModelParams};

    fn setup() -> OracleSetup {
        let p = ModelParams::from_spec(&reference_spec(1, 1));
        OracleSetup::standard(p.model_q().unwrap(), p.theta, 182).unwrap()
    }

    #[test]
    fn small_suite_runs() {
        let s = setup();
        let lines = oracle_suite(&s, &McConfig::default().with_paths(20_000)).unwrap();
        assert_eq!(lines.len(), 11);
        for l in &lines {
            assert!(l.closed_form.is_finite() && l.estimate.mean.is_finite(), "{l}");
        }
    }

    #[test]
    fn option_inputs_are_consistent() {
        let s = setup();
        let n = s.normal_inputs().unwrap();
        let l = s.lognormal_inputs().unwrap();
        assert_eq!(n.forward, l.forward);
        // frozen φ = F_u · relative vol, so σ² = F² v
        assert!((n.sigma_ut.powi(2) / (l.forward.powi(2) * l.variance) - 1.0).abs() < 1e-6);
    }
}
