//! Three-stage estimation from load and price data.
//!
//! 1. Least-squares load seasonality `g̃` on the full load history.
//! 2. OU maximum likelihood on the deseasonalised load `x̃ = G - g̃`.
//! 3. A quasi-Newton search over the supply curve and the Girsanov parameter
//!    that matches model intraday and day-ahead prices to the market. By
//!    default the price seasonality `γ3` is profiled out of the objective;
//!    regressing it once on the price mixture is available as an option but
//!    lets `γ3` absorb the seasonal part of the supply curve.
//!
//! Model prices use the realised states: `x̃_τ` for the intraday price of
//! hour `τ` and `x̃_{τ-δ}` for its day-ahead price, moved to the risk-neutral
//! measure with the first-order shift.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conventions::MarketConventions;
use crate::data::{MarketSeries, ModelParams};
use crate::error::{domain, Error, Result};
use crate::numerics::{bfgs, minimize_bounded, BfgsOptions};
use crate::ou::{mle_fit, OuParams};
use crate::seasonality::{self, Calendar, SeasonalityModel};
use crate::structural::{SupplyParams, EXPONENT_LIMIT};

/// Objective value returned when a model price overflows.
pub const OVERFLOW_PENALTY: f64 = 1e12;

/// Fallback supply curve when the initial least-squares fit fails.
pub fn default_supply_guess(mean_load: f64) -> SupplyParams<f64> {
    SupplyParams {
        alpha1: 0.2,
        alpha2: -0.2,
        beta1: mean_load,
        beta2: mean_load,
    }
}

/// Outer normalisation of the price objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveForm {
    /// `(1/(2N)) sqrt(Σ (I^M - I)² + Σ (S^M - S)²)`.
    #[default]
    Printed,
    /// `Σ (I^M - I)² + Σ (S^M - S)²`.
    SumOfSquares,
}

/// How `γ3` is obtained before (and between) supply-curve searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma3Estimation {
    /// Regress the price mixture `(I + S)/(1 + e^{-rδ})` once.
    Mixture,
    /// Start from the mixture, then alternate: regress the mixture minus
    /// the current model supply component, re-run the supply search, until
    /// the parameters move less than `tol` (max-norm) or `max_rounds`.
    Alternating { max_rounds: usize, tol: f64 },
    /// Choose the `γ3` coefficients jointly with the supply curve and `θ`:
    /// for every trial curve the best `γ3` is a linear least-squares
    /// solution, so it is profiled out of the price objective exactly.
    Profiled,
}

impl Default for Gamma3Estimation {
    fn default() -> Self {
        Gamma3Estimation::Profiled
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub form: ObjectiveForm,
    pub bfgs: BfgsOptions,
    pub gamma3: Gamma3Estimation,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            form: ObjectiveForm::Printed,
            bfgs: BfgsOptions::default(),
            gamma3: Gamma3Estimation::default(),
        }
    }
}

/// Stage 1: load seasonality on the whole load history.
pub fn fit_load_seasonality(series: &MarketSeries, calendar: Arc<Calendar>) -> Result<SeasonalityModel<f64>> {
    let obs: Vec<(f64, f64)> = (0..series.len()).map(|k| (series.tau(k), series.load[k])).collect();
    seasonality::fit(&obs, series.epoch(), calendar)
}

/// Deseasonalised load `x̃_k = G_k - g̃(τ_k)`.
pub fn deseasonalize(series: &MarketSeries, g_tilde: &SeasonalityModel<f64>) -> Vec<f64> {
    (0..series.len()).map(|k| series.load[k] - g_tilde.value(series.tau(k))).collect()
}

/// Stage 2: OU maximum likelihood on the deseasonalised load.
pub fn fit_ou(series: &MarketSeries, g_tilde: &SeasonalityModel<f64>) -> Result<OuParams<f64>> {
    mle_fit(&deseasonalize(series, g_tilde), 1.0)
}

/// One aligned hour, with everything that does not depend on the supply
/// curve or `θ` precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricedHour {
    pub row: usize,
    pub tau: f64,
    pub month: (i32, u32),
    pub intraday: f64,
    pub day_ahead: f64,
    /// `g̃(τe) + e^{-λε} x̃_τ`.
    level_id: f64,
    /// `g̃(τe) + e^{-λ(δ+ε)} x̃_{τ-δ}`.
    level_da: f64,
    /// Load shift per unit `θ`: `λσ (e^{-λ(τe-t)} t - τe)` at the trading time.
    theta_id: f64,
    theta_da: f64,
    pub gamma3: f64,
}

/// Market hours prepared for repeated model pricing.
#[derive(Debug, Clone)]
pub struct PricingData {
    pub conv: MarketConventions<f64>,
    pub ou: OuParams<f64>,
    pub g_tilde: SeasonalityModel<f64>,
    pub gamma3: SeasonalityModel<f64>,
    pub hours: Vec<PricedHour>,
    /// Half the conditional variance of `X_{τe}` from the two trading times.
    half_var_id: f64,
    half_var_da: f64,
    disc_id: f64,
    disc_da: f64,
}

impl PricingData {
    /// Aligned hours with `τ ≥ δ` and a load observation at `τ + ε`.
    pub fn new(
        series: &MarketSeries,
        g_tilde: &SeasonalityModel<f64>,
        ou: &OuParams<f64>,
        gamma3: &SeasonalityModel<f64>,
        conv: &MarketConventions<f64>,
    ) -> Result<Self> {
        if conv.delta.fract() != 0.0 || conv.epsilon.fract() != 0.0 {
            return domain("calibration needs whole-hour delivery and day lengths");
        }
        let (lag, lead) = (conv.delta as usize, conv.epsilon as usize);
        let x = deseasonalize(series, g_tilde);
        let l = ou.lambda;
        let ls = ou.lambda * ou.sigma;
        let (w_id, w_da) = ((-l * conv.epsilon).exp(), (-l * (conv.delta + conv.epsilon)).exp());
        let hours: Vec<PricedHour> = series
            .aligned_rows()
            .filter(|&k| k >= lag && k + lead < series.len())
            .map(|k| {
                let tau = series.tau(k);
                let tau_e = tau + conv.epsilon;
                let g_end = g_tilde.value(tau_e);
                let ts = series.timestamps[k];
                PricedHour {
                    row: k,
                    tau,
                    month: (ts.year(), ts.month()),
                    intraday: series.intraday[k].expect("aligned"),
                    day_ahead: series.day_ahead[k].expect("aligned"),
                    level_id: g_end + w_id * x[k],
                    level_da: g_end + w_da * x[k - lag],
                    theta_id: ls * (w_id * tau - tau_e),
                    theta_da: ls * (w_da * (tau - conv.delta) - tau_e),
                    gamma3: gamma3.value(tau),
                }
            })
            .collect();
        if hours.is_empty() {
            return Err(Error::Estimation("no aligned intraday/day-ahead observations".into()));
        }
        Ok(Self {
            conv: *conv,
            ou: *ou,
            g_tilde: g_tilde.clone(),
            gamma3: gamma3.clone(),
            hours,
            half_var_id: 0.5 * ou.variance(conv.epsilon),
            half_var_da: 0.5 * ou.variance(conv.delta + conv.epsilon),
            disc_id: (-conv.hourly_rate() * conv.epsilon).exp(),
            disc_da: (-conv.hourly_rate() * (conv.delta + conv.epsilon)).exp(),
        })
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Replaces `γ3` and refreshes its cached values.
    pub fn set_gamma3(&mut self, gamma3: SeasonalityModel<f64>) {
        for h in &mut self.hours {
            h.gamma3 = gamma3.value(h.tau);
        }
        self.gamma3 = gamma3;
    }

    /// Subset with the given hours, e.g. one calendar month.
    pub fn subset(&self, keep: impl Fn(&PricedHour) -> bool) -> Self {
        Self {
            hours: self.hours.iter().copied().filter(|h| keep(h)).collect(),
            g_tilde: self.g_tilde.clone(),
            gamma3: self.gamma3.clone(),
            ..*self
        }
    }

    /// Supply components `γ1 - γ2` of the intraday and day-ahead forwards.
    fn supply_parts(&self, h: &PricedHour, s: &SupplyParams<f64>, theta: f64) -> Result<(f64, f64)> {
        let branch = |alpha: f64, beta: f64, level: f64, half_var: f64| -> Result<f64> {
            let arg = alpha * (level + alpha * half_var - beta);
            if !arg.is_finite() || arg.abs() > EXPONENT_LIMIT {
                return Err(Error::Numeric(format!(
                    "supply exponent {arg} out of range at tau={}",
                    h.tau
                )));
            }
            Ok(arg.exp())
        };
        let lid = h.level_id + theta * h.theta_id;
        let lda = h.level_da + theta * h.theta_da;
        let a_id = branch(s.alpha1, s.beta1, lid, self.half_var_id)? - branch(s.alpha2, s.beta2, lid, self.half_var_id)?;
        let a_da = branch(s.alpha1, s.beta1, lda, self.half_var_da)? - branch(s.alpha2, s.beta2, lda, self.half_var_da)?;
        Ok((a_id, a_da))
    }

    /// Model `(intraday, day_ahead)` prices of one hour.
    pub fn model_prices(&self, h: &PricedHour, s: &SupplyParams<f64>, theta: f64) -> Result<(f64, f64)> {
        let (a_id, a_da) = self.supply_parts(h, s, theta)?;
        Ok((self.disc_id * (a_id + h.gamma3), self.disc_da * (a_da + h.gamma3)))
    }

    /// `(Σ (I^M - I)², Σ (S^M - S)²)`, summed over fixed chunks in order.
    pub fn squared_errors(&self, s: &SupplyParams<f64>, theta: f64) -> Result<(f64, f64)> {
        const CHUNK: usize = 2048;
        let parts: Vec<Result<(f64, f64)>> = self
            .hours
            .par_chunks(CHUNK)
            .map(|chunk| {
                let (mut ei, mut es) = (0.0, 0.0);
                for h in chunk {
                    let (i, d) = self.model_prices(h, s, theta)?;
                    ei += (h.intraday - i).powi(2);
                    es += (h.day_ahead - d).powi(2);
                }
                Ok((ei, es))
            })
            .collect();
        let (mut ei, mut es) = (0.0, 0.0);
        for p in parts {
            let (a, b) = p?;
            ei += a;
            es += b;
        }
        Ok((ei, es))
    }

    /// Objective value, with overflow reported as an error.
    pub fn objective_checked(&self, s: &SupplyParams<f64>, theta: f64, form: ObjectiveForm) -> Result<f64> {
        let (ei, es) = self.squared_errors(s, theta)?;
        Ok(match form {
            ObjectiveForm::Printed => (ei + es).sqrt() / (2.0 * self.len() as f64),
            ObjectiveForm::SumOfSquares => ei + es,
        })
    }
}

/// Price objective; overflow of a model price yields [`OVERFLOW_PENALTY`].
pub fn pricing_objective(data: &PricingData, supply: &SupplyParams<f64>, theta: f64, form: ObjectiveForm) -> f64 {
    data.objective_checked(supply, theta, form).unwrap_or(OVERFLOW_PENALTY)
}

/// `[ln α1, ln(-α2), β1, β2, θ]`.
pub fn to_unconstrained(s: &SupplyParams<f64>, theta: f64) -> [f64; 5] {
    [s.alpha1.ln(), (-s.alpha2).ln(), s.beta1, s.beta2, theta]
}

pub fn from_unconstrained(x: &[f64]) -> (SupplyParams<f64>, f64) {
    (
        SupplyParams {
            alpha1: x[0].exp(),
            alpha2: -x[1].exp(),
            beta1: x[2],
            beta2: x[3],
        },
        x[4],
    )
}

/// Objective as a function of the unconstrained parameter vector.
pub fn objective_unconstrained(data: &PricingData, x: &[f64], form: ObjectiveForm) -> f64 {
    let (s, theta) = from_unconstrained(x);
    pricing_objective(data, &s, theta, form)
}

/// Orthonormal basis of the `γ3` design over the priced hours.
#[derive(Debug, Clone)]
pub struct Gamma3Profile {
    q: DMatrix<f64>,
}

impl Gamma3Profile {
    pub fn new(data: &PricingData) -> Result<Self> {
        let n = data.len();
        if n < seasonality::N_COLUMNS {
            return Err(Error::Estimation(format!(
                "profiling gamma3 needs at least {} price hours, got {n}",
                seasonality::N_COLUMNS
            )));
        }
        let mut x = DMatrix::<f64>::zeros(n, seasonality::N_COLUMNS);
        for (i, h) in data.hours.iter().enumerate() {
            let row = seasonality::design_row(h.tau, data.gamma3.epoch, &data.gamma3.calendar);
            for (j, v) in row.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        for mut col in x.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let qr = x.qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * rmax) {
            return Err(Error::Estimation("gamma3 design is rank deficient over the price hours".into()));
        }
        Ok(Self { q: qr.q() })
    }

    /// Part of `v` orthogonal to the seasonal family.
    fn residual(&self, v: DVector<f64>) -> DVector<f64> {
        let fitted = &self.q * self.q.tr_mul(&v);
        v - fitted
    }

    /// Best `γ3` value at each priced hour for the given curve and `θ`,
    /// together with the two supply components.
    fn solve(&self, data: &PricingData, s: &SupplyParams<f64>, theta: f64) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
        let parts = data
            .hours
            .par_iter()
            .map(|h| data.supply_parts(h, s, theta))
            .collect::<Result<Vec<_>>>()?;
        let (di, ds) = (data.disc_id, data.disc_da);
        let z = DVector::from_iterator(
            data.len(),
            data.hours.iter().zip(&parts).map(|(h, (ai, as_))| {
                di * (h.intraday - di * ai) + ds * (h.day_ahead - ds * as_)
            }),
        );
        let fitted = &self.q * (self.q.tr_mul(&z)) / (di * di + ds * ds);
        Ok((fitted.iter().copied().collect(), parts))
    }

    /// Price objective with `γ3` profiled out.
    pub fn objective_checked(&self, data: &PricingData, s: &SupplyParams<f64>, theta: f64, form: ObjectiveForm) -> Result<f64> {
        let (g3, parts) = self.solve(data, s, theta)?;
        let (mut ei, mut es) = (0.0, 0.0);
        for ((h, (ai, as_)), g) in data.hours.iter().zip(parts).zip(g3) {
            ei += (h.intraday - data.disc_id * (ai + g)).powi(2);
            es += (h.day_ahead - data.disc_da * (as_ + g)).powi(2);
        }
        Ok(match form {
            ObjectiveForm::Printed => (ei + es).sqrt() / (2.0 * data.len() as f64),
            ObjectiveForm::SumOfSquares => ei + es,
        })
    }

    pub fn objective(&self, data: &PricingData, s: &SupplyParams<f64>, theta: f64, form: ObjectiveForm) -> f64 {
        self.objective_checked(data, s, theta, form).unwrap_or(OVERFLOW_PENALTY)
    }

    /// The profiled `γ3` as a seasonality model.
    pub fn gamma3(&self, data: &PricingData, s: &SupplyParams<f64>, theta: f64) -> Result<SeasonalityModel<f64>> {
        let (g3, _) = self.solve(data, s, theta)?;
        let obs: Vec<(f64, f64)> = data.hours.iter().zip(g3).map(|(h, g)| (h.tau, g)).collect();
        seasonality::fit(&obs, data.gamma3.epoch, data.gamma3.calendar.clone())
    }
}

/// Stage 3 with `γ3` profiled out.
pub fn calibrate_supply_theta_profiled(
    data: &PricingData,
    profile: &Gamma3Profile,
    init: &SupplyParams<f64>,
    theta0: f64,
    form: ObjectiveForm,
    opts: BfgsOptions,
) -> Result<SupplyFit> {
    init.validate()?;
    let x0 = to_unconstrained(init, theta0);
    let m = bfgs(
        |x| {
            let (s, th) = from_unconstrained(x);
            mean_square(profile.objective(data, &s, th, ObjectiveForm::SumOfSquares), data.len())
        },
        &x0,
        opts,
    )?;
    let (supply, theta) = from_unconstrained(&m.x);
    Ok(SupplyFit {
        supply,
        theta,
        objective: profile.objective(data, &supply, theta, form),
        iterations: m.iterations,
        converged: m.converged,
        grad_norm: m.grad_norm,
    })
}

/// Result of the supply-curve and `θ` search.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyFit {
    pub supply: SupplyParams<f64>,
    pub theta: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// The searches minimise the mean squared price error, which has the same
/// minimisers as either objective form but stays smooth at a perfect fit,
/// where the square root in the printed form has a kink.
fn mean_square(sse: f64, n: usize) -> f64 {
    if sse >= OVERFLOW_PENALTY {
        OVERFLOW_PENALTY
    } else {
        sse / (2 * n) as f64
    }
}

/// Stage 3 with `γ3` held fixed.
pub fn calibrate_supply_theta(
    data: &PricingData,
    init: &SupplyParams<f64>,
    theta0: f64,
    form: ObjectiveForm,
    opts: BfgsOptions,
) -> Result<SupplyFit> {
    init.validate()?;
    let x0 = to_unconstrained(init, theta0);
    let m = bfgs(|x| mean_square(objective_unconstrained(data, x, ObjectiveForm::SumOfSquares), data.len()), &x0, opts)?;
    let (supply, theta) = from_unconstrained(&m.x);
    Ok(SupplyFit {
        supply,
        theta,
        objective: pricing_objective(data, &supply, theta, form),
        iterations: m.iterations,
        converged: m.converged,
        grad_norm: m.grad_norm,
    })
}

/// Initial supply curves from intraday prices alone: least squares of the
/// undiscounted `I^M(τ)` on `e^{α1(G-β1)} - e^{α2(G-β2)} + γ3(τ)`, where `G` is
/// the expected end-of-delivery load given the state at `τ` and `γ3` is free
/// within the seasonal family. The fitted levels are then moved by `α·v/2`
/// (`v` the one-period state variance), which makes the fit exact for
/// noiseless model prices with `θ = 0`.
///
/// The surplus branch is weakly identified: as `α2 → 0` with `β2` growing it
/// degenerates into a near-linear term on a flat plateau. The search is
/// therefore started once per decade of `|α2|` and every distinct local
/// optimum is returned, best first.
pub fn initial_supply_candidates(data: &PricingData) -> Result<Vec<SupplyCandidate>> {
    let n = data.len() as f64;
    let profile = Gamma3Profile::new(data)?;
    let y = profile.residual(DVector::from_iterator(
        data.len(),
        data.hours.iter().map(|h| h.intraday / data.disc_id),
    ));
    let scale = data.hours.iter().map(|h| h.intraday.abs()).fold(1.0, f64::max);
    if y.norm() <= 1e-9 * scale * n.sqrt() {
        return Err(Error::Estimation("intraday prices are constant or purely seasonal".into()));
    }
    let center = data.hours.iter().map(|h| h.level_id).sum::<f64>() / n;
    let sse = |x: &[f64]| -> f64 {
        let (a1, a2) = (x[0].exp(), -x[1].exp());
        let mut curve = DVector::zeros(data.len());
        for (c, h) in curve.iter_mut().zip(&data.hours) {
            let (e1, e2) = (a1 * (h.level_id - x[2]), a2 * (h.level_id - x[3]));
            if e1.abs() > EXPONENT_LIMIT || e2.abs() > EXPONENT_LIMIT {
                return OVERFLOW_PENALTY;
            }
            *c = e1.exp() - e2.exp();
        }
        (&y - profile.residual(curve)).norm_squared() / n
    };
    let opts = BfgsOptions {
        grad_tol: 1e-8,
        max_iter: 2000,
        rel_step: 1e-6,
    };
    let mut out: Vec<SupplyCandidate> = Vec::new();
    for x0 in slope_grid_starts(data, &profile, &y, center) {
        let Ok(m) = bfgs(sse, &x0, opts) else { continue };
        if !(m.value < OVERFLOW_PENALTY && m.x.iter().all(|v| v.is_finite())) {
            continue;
        }
        let (a1, a2) = (m.x[0].exp(), -m.x[1].exp());
        let supply = SupplyParams {
            alpha1: a1,
            alpha2: a2,
            beta1: m.x[2] + a1 * data.half_var_id,
            beta2: m.x[3] + a2 * data.half_var_id,
        };
        if supply.validate().is_err() || a1 <= 1e-8 || a2 >= -1e-8 {
            continue;
        }
        let same = |c: &SupplyCandidate| {
            let (u, v) = (to_unconstrained(&c.supply, 0.0), to_unconstrained(&supply, 0.0));
            u.iter().zip(v).all(|(p, q)| (p - q).abs() < 1e-3 * p.abs().max(1.0))
        };
        if out.iter().any(same) {
            continue;
        }
        out.push(SupplyCandidate {
            supply,
            mse: m.value,
            converged: m.converged,
        });
    }
    out.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    if out.is_empty() {
        return Err(Error::Estimation("initial supply fit failed from every start".into()));
    }
    Ok(out)
}

/// One local optimum of the initial supply fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyCandidate {
    pub supply: SupplyParams<f64>,
    /// Mean squared intraday residual.
    pub mse: f64,
    pub converged: bool,
}

/// Best initial candidate, or [`default_supply_guess`] and the reason.
pub fn initial_supply_guess(data: &PricingData) -> (SupplyParams<f64>, Option<String>) {
    match initial_supply_candidates(data) {
        Ok(c) => (c[0].supply, None),
        Err(e) => {
            let mean_load = data.hours.iter().map(|h| h.level_id).sum::<f64>() / data.len() as f64;
            (default_supply_guess(mean_load), Some(format!("{e}; using default supply curve")))
        }
    }
}

/// Starts on a log grid of slopes, the best one in each decade of `|α2|`.
/// For fixed slopes the curve `c1 e^{α1(G-Ḡ)} - c2 e^{α2(G-Ḡ)}` is linear in
/// the scales, which are solved by least squares after removing the seasonal
/// part; cells with a non-positive scale are skipped. Each start is
/// `[ln α1, ln(-α2), β1, β2]`.
fn slope_grid_starts(data: &PricingData, profile: &Gamma3Profile, y: &DVector<f64>, center: f64) -> Vec<[f64; 4]> {
    const PER_DECADE: usize = 6;
    const DECADES: usize = 3;
    const GRID: usize = PER_DECADE * DECADES;
    let slope = |i: usize| 10f64.powf(-2.5 + 3.0 * (i as f64 + 0.5) / GRID as f64);
    let column = |a: f64, sign: f64| {
        profile.residual(DVector::from_iterator(
            data.len(),
            data.hours.iter().map(|h| sign * (a * (h.level_id - center)).exp()),
        ))
    };
    let up: Vec<_> = (0..GRID).map(|i| column(slope(i), 1.0)).collect();
    let down: Vec<_> = (0..GRID).map(|j| column(-slope(j), -1.0)).collect();
    let mut best: Vec<Option<(f64, [f64; 4])>> = vec![None; DECADES];
    for (i, e1) in up.iter().enumerate() {
        for (j, e2) in down.iter().enumerate() {
            let (s11, s12, s22) = (e1.dot(e1), e1.dot(e2), e2.dot(e2));
            let (r1, r2) = (e1.dot(y), e2.dot(y));
            let det = s11 * s22 - s12 * s12;
            if !(det.is_finite() && det > 1e-12 * s11 * s22) {
                continue;
            }
            let c1 = (s22 * r1 - s12 * r2) / det;
            let c2 = (s11 * r2 - s12 * r1) / det;
            if !(c1 > 0.0 && c2 > 0.0) {
                continue;
            }
            let explained = c1 * r1 + c2 * r2;
            let (a1, a2) = (slope(i), -slope(j));
            let x = [a1.ln(), (-a2).ln(), center - c1.ln() / a1, center - c2.ln() / a2];
            let slot = &mut best[j / PER_DECADE];
            if slot.as_ref().is_none_or(|(b, _)| explained > *b) {
                *slot = Some((explained, x));
            }
        }
    }
    best.into_iter().flatten().map(|(_, x)| x).collect()
}

/// `γ3` regressed on the price mixture of the aligned hours.
pub fn fit_gamma3_mixture(series: &MarketSeries, data: &PricingData) -> Result<SeasonalityModel<f64>> {
    let da: Vec<f64> = data.hours.iter().map(|h| h.day_ahead).collect();
    let id: Vec<f64> = data.hours.iter().map(|h| h.intraday).collect();
    let target = seasonality::gamma3_target(&da, &id, &data.conv)?;
    let obs: Vec<(f64, f64)> = data.hours.iter().zip(target).map(|(h, v)| (h.tau, v)).collect();
    seasonality::fit(&obs, series.epoch(), data.g_tilde.calendar.clone())
}

/// `γ3` regressed on the mixture after removing the model supply component:
/// `e^{rε} (I + S)/(1 + e^{-rδ}) - (A_I + e^{-rδ} A_S)/(1 + e^{-rδ})`.
pub fn fit_gamma3_given_supply(
    series: &MarketSeries,
    data: &PricingData,
    supply: &SupplyParams<f64>,
    theta: f64,
) -> Result<SeasonalityModel<f64>> {
    let w = (-data.conv.hourly_rate() * data.conv.delta).exp();
    let grow = data.conv.growth(data.conv.epsilon);
    let obs = data
        .hours
        .iter()
        .map(|h| {
            let (a_id, a_da) = data.supply_parts(h, supply, theta)?;
            let mix = grow * (h.intraday + h.day_ahead) / (1.0 + w);
            Ok((h.tau, mix - (a_id + w * a_da) / (1.0 + w)))
        })
        .collect::<Result<Vec<_>>>()?;
    seasonality::fit(&obs, series.epoch(), data.g_tilde.calendar.clone())
}

/// All calibrated quantities.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub g_tilde: SeasonalityModel<f64>,
    pub ou: OuParams<f64>,
    pub gamma3: SeasonalityModel<f64>,
    pub supply: SupplyParams<f64>,
    pub theta: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gamma3_rounds: usize,
    pub n_prices: usize,
    pub diagnostics: Vec<String>,
}

impl CalibrationResult {
    /// Parameter file contents for the calibrated model.
    pub fn to_params(&self, conv: &MarketConventions<f64>) -> ModelParams {
        ModelParams {
            conv: *conv,
            ou: self.ou,
            supply: self.supply,
            theta: self.theta,
            g_tilde: self.g_tilde.clone(),
            gamma3: self.gamma3.clone(),
        }
    }

    /// Key/value report with one parameter per line.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# structural model calibration");
        for (k, v) in [
            ("lambda", self.ou.lambda),
            ("sigma", self.ou.sigma),
            ("x0", self.ou.x0),
            ("alpha1", self.supply.alpha1),
            ("alpha2", self.supply.alpha2),
            ("beta1", self.supply.beta1),
            ("beta2", self.supply.beta2),
            ("theta", self.theta),
            ("objective", self.objective_value),
        ] {
            let _ = writeln!(s, "{k} = {v:.10e}");
        }
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "gamma3_rounds = {}", self.gamma3_rounds);
        let _ = writeln!(s, "price_observations = {}", self.n_prices);
        for d in &self.diagnostics {
            let _ = writeln!(s, "# {d}");
        }
        s
    }
}

/// Runs all three stages.
pub fn calibrate(
    series: &MarketSeries,
    calendar: Arc<Calendar>,
    conv: &MarketConventions<f64>,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let g_tilde = fit_load_seasonality(series, calendar)?;
    let ou = fit_ou(series, &g_tilde)?;
    let mut diagnostics = Vec::new();
    let zero = SeasonalityModel::zero(series.epoch(), g_tilde.calendar.clone());
    let mut data = PricingData::new(series, &g_tilde, &ou, &zero, conv)?;
    let gamma3 = fit_gamma3_mixture(series, &data)?;
    data.set_gamma3(gamma3);

    let starts = match initial_supply_candidates(&data) {
        Ok(c) => c.into_iter().map(|c| c.supply).collect(),
        Err(e) => {
            diagnostics.push(format!("{e}; using default supply curve"));
            let mean_load = series.load.iter().sum::<f64>() / series.len() as f64;
            vec![default_supply_guess(mean_load)]
        }
    };
    let profile = match opts.gamma3 {
        Gamma3Estimation::Profiled => Some(Gamma3Profile::new(&data)?),
        _ => None,
    };
    let mut fit: Option<SupplyFit> = None;
    for init in &starts {
        let f = match &profile {
            Some(p) => calibrate_supply_theta_profiled(&data, p, init, 0.0, opts.form, opts.bfgs)?,
            None => calibrate_supply_theta(&data, init, 0.0, opts.form, opts.bfgs)?,
        };
        if fit.as_ref().is_none_or(|b| f.objective < b.objective) {
            fit = Some(f);
        }
    }
    let mut fit = fit.expect("at least one start");
    if starts.len() > 1 {
        diagnostics.push(format!("supply search run from {} starting curves", starts.len()));
    }
    if let Some(p) = &profile {
        data.set_gamma3(p.gamma3(&data, &fit.supply, fit.theta)?);
    }
    let mut rounds = 1;
    if let Gamma3Estimation::Alternating { max_rounds, tol } = opts.gamma3 {
        while rounds < max_rounds {
            let g3 = fit_gamma3_given_supply(series, &data, &fit.supply, fit.theta)?;
            data.set_gamma3(g3);
            let next = calibrate_supply_theta(&data, &fit.supply, fit.theta, opts.form, opts.bfgs)?;
            let before = to_unconstrained(&fit.supply, fit.theta);
            let after = to_unconstrained(&next.supply, next.theta);
            let moved = before.iter().zip(after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            fit = next;
            rounds += 1;
            if moved < tol {
                break;
            }
        }
        if rounds == max_rounds {
            diagnostics.push(format!("gamma3 alternation stopped after {max_rounds} rounds"));
        }
    }
    if !fit.converged {
        diagnostics.push(format!(
            "supply search not converged after {} iterations (gradient norm {:.3e})",
            fit.iterations, fit.grad_norm
        ));
    }
    Ok(CalibrationResult {
        g_tilde,
        ou,
        gamma3: data.gamma3.clone(),
        supply: fit.supply,
        theta: fit.theta,
        objective_value: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        gamma3_rounds: rounds,
        n_prices: data.len(),
        diagnostics,
    })
}

/// Implied `θ` for one calendar month.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyTheta {
    pub year: i32,
    pub month: u32,
    pub theta: f64,
    pub n_obs: usize,
    pub objective: f64,
}

/// Minimum number of aligned hours for a month to be estimated.
pub const MIN_MONTH_HOURS: usize = 48;

/// Per-month minimisation of the objective over `θ ∈ [-1, 1]` with the
/// supply curve fixed. Months with fewer than [`MIN_MONTH_HOURS`] aligned
/// hours are skipped and listed in the returned diagnostics.
pub fn implied_theta_monthly(
    data: &PricingData,
    supply: &SupplyParams<f64>,
    form: ObjectiveForm,
) -> Result<(Vec<MonthlyTheta>, Vec<String>)> {
    supply.validate()?;
    let mut months: BTreeMap<(i32, u32), usize> = BTreeMap::new();
    for h in &data.hours {
        *months.entry(h.month).or_default() += 1;
    }
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (&(year, month), &count) in &months {
        if count < MIN_MONTH_HOURS {
            skipped.push(format!("{year}-{month:02}: only {count} aligned hours, skipped"));
            continue;
        }
        let sub = data.subset(|h| h.month == (year, month));
        let (theta, objective) = minimize_bounded(|th| pricing_objective(&sub, supply, th, form), -1.0, 1.0, 1e-6)?;
        out.push(MonthlyTheta {
            year,
            month,
            theta,
            n_obs: count,
            objective,
        });
    }
    if out.is_empty() {
        return Err(Error::Estimation("no month has enough aligned price observations".into()));
    }
    Ok((out, skipped))
}
