//! Zero-mean Gaussian Ornstein-Uhlenbeck process
//! `dX = -λ X dt + σ dW`: exact transition law, exact-scheme simulation and
//! conditional maximum likelihood.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::{one_minus_exp_neg, Scalar};

/// Below this value of `λ·dt` the transition variance uses its `σ²·dt` limit.
const SMALL_DECAY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams<T> {
    /// Mean-reversion speed per hour.
    pub lambda: T,
    /// Volatility per square-root hour.
    pub sigma: T,
    pub x0: T,
}

impl<T: Scalar> OuParams<T> {
    pub fn new(lambda: T, sigma: T, x0: T) -> Result<Self> {
        let p = Self { lambda, sigma, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return domain(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return domain(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }

    /// `σ² / (2λ)`.
    pub fn stationary_variance(&self) -> T {
        self.sigma * self.sigma / (T::lit(2.0) * self.lambda)
    }

    /// Conditional variance of `X_{t+dt}` given `X_t`.
    pub fn variance(&self, dt: T) -> T {
        let s2 = self.sigma * self.sigma;
        let k = self.lambda * dt;
        if k < T::lit(SMALL_DECAY) {
            s2 * dt
        } else {
            s2 * one_minus_exp_neg(T::lit(2.0) * k) / (T::lit(2.0) * self.lambda)
        }
    }
}

/// Conditional `(mean, variance)` of `X_{t+dt}` given `X_t = x`.
pub fn transition<T: Scalar>(params: &OuParams<T>, x: T, dt: T) -> Result<(T, T)> {
    if !(dt >= T::zero()) {
        return domain(format!("transition horizon must be >= 0, got {dt}"));
    }
    Ok((x * (-params.lambda * dt).exp(), params.variance(dt)))
}

/// Conditional mean when an additional constant drift `bias` is added to
/// the dynamics, `dX = (-λ X + bias) dt + σ dW`.
pub(crate) fn biased_mean(params: &OuParams<f64>, x: f64, dt: f64, bias: f64) -> f64 {
    let decay = (-params.lambda * dt).exp();
    x * decay + bias * one_minus_exp_neg(params.lambda * dt) / params.lambda
}

/// A realised path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl OuPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Samples a path on `grid` with the exact Gaussian transition, starting at
/// `params.x0` at `grid[0] == 0`.
pub fn simulate(params: &OuParams<f64>, grid: &[f64], seed: u64) -> Result<OuPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(params, grid, &mut rng)
}

pub fn simulate_with<R: rand::Rng + ?Sized>(
    params: &OuParams<f64>,
    grid: &[f64],
    rng: &mut R,
) -> Result<OuPath> {
    params.validate()?;
    match grid.first() {
        None => return domain("simulation grid is empty"),
        Some(&t0) if t0 != 0.0 => return domain(format!("simulation grid must start at 0, got {t0}")),
        _ => {}
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return domain(format!(
            "simulation grid must be strictly increasing ({} then {})",
            w[0], w[1]
        ));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut x = params.x0;
    values.push(x);
    for w in grid.windows(2) {
        let (mean, var) = transition(params, x, w[1] - w[0])?;
        let z: f64 = StandardNormal.sample(rng);
        x = mean + var.sqrt() * z;
        values.push(x);
    }
    Ok(OuPath {
        times: grid.to_vec(),
        values,
    })
}

/// Conditional maximum-likelihood estimate of `(λ, σ)` from equally spaced
/// observations of a zero-mean OU process; `x0` is the first observation.
///
/// The likelihood is that of the exact AR(1) transition
/// `X_{k+1} | X_k ~ N(a X_k, v)` with `a = e^{-λ dt}`; the profile over `a`
/// is closed form, then `λ = -ln(a)/dt` and `σ² = 2λ v / (1 - a²)`.
pub fn mle_fit(series: &[f64], dt: f64) -> Result<OuParams<f64>> {
    if series.len() < 3 {
        return Err(Error::Estimation(format!(
            "at least 3 observations required, got {}",
            series.len()
        )));
    }
    if !(dt > 0.0) {
        return domain(format!("sampling interval must be positive, got {dt}"));
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for w in series.windows(2) {
        sxx += w[0] * w[0];
        sxy += w[0] * w[1];
    }
    if !(sxx > 0.0) {
        return Err(Error::Estimation(
            "degenerate sample: lagged values are identically zero".into(),
        ));
    }
    let a = sxy / sxx;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Estimation(format!(
            "non-mean-reverting sample (AR coefficient {a})"
        )));
    }
    let m = (series.len() - 1) as f64;
    let v = series
        .windows(2)
        .map(|w| {
            let e = w[1] - a * w[0];
            e * e
        })
        .sum::<f64>()
        / m;
    let lambda = -a.ln() / dt;
    let sigma = (2.0 * lambda * v / (1.0 - a * a)).sqrt();
    OuParams::new(lambda, sigma, series[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table1() -> OuParams<f64> {
        OuParams::new(0.0298, 1.4988, -12.5776).unwrap()
    }

    #[test]
    fn zero_time_transition() {
        let (m, v) = transition(&table1(), -12.5776, 0.0).unwrap();
        assert_eq!(m, -12.5776);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn deterministic_decay_without_noise() {
        let p = OuParams::new(0.3, 0.0, 2.0).unwrap();
        let (m, v) = transition(&p, 5.0, 7.0).unwrap();
        assert_relative_eq!(m, 5.0 * (-2.1f64).exp(), max_relative = 1e-15);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn one_day_transition_values() {
        let (m, v) = transition(&table1(), 10.0, 24.0).unwrap();
        assert_relative_eq!(m, 10.0 * (-0.0298f64 * 24.0).exp(), max_relative = 1e-15);
        assert!((m - 4.891).abs() < 1e-3, "{m}");
        assert!((v - 28.68).abs() < 1e-2, "{v}");
    }

    #[test]
    fn one_day_transition_monte_carlo() {
        let p = table1();
        let (m, v) = transition(&p, 10.0, 24.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        // exact scheme in 24 hourly steps, independent of the one-shot formula
        for _ in 0..n {
            let mut x = 10.0;
            for _ in 0..24 {
                let a = (-p.lambda).exp();
                let sd = (p.sigma * p.sigma * (1.0 - a * a) / (2.0 * p.lambda)).sqrt();
                let z: f64 = StandardNormal.sample(&mut rng);
                x = a * x + sd * z;
            }
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / n as f64).sqrt();
        assert!((mean - m).abs() < 3.0 * se_mean, "{mean} vs {m}");
        assert!((var - v).abs() < 3.0 * se_var, "{var} vs {v}");
    }

    #[test]
    fn small_decay_uses_brownian_limit() {
        let p = OuParams::new(1e-12, 2.0, 0.0).unwrap();
        assert_eq!(p.variance(3.0), 12.0);
    }

    #[test]
    fn negative_horizon_rejected() {
        assert!(transition(&table1(), 0.0, -1.0).is_err());
    }

    #[test]
    fn chapman_kolmogorov() {
        let p = table1();
        let (m1, v1) = transition(&p, 3.7, 5.0).unwrap();
        let (m2, v2) = transition(&p, m1, 11.0).unwrap();
        let a2 = (-p.lambda * 11.0).exp();
        let (m, v) = transition(&p, 3.7, 16.0).unwrap();
        assert_relative_eq!(m2, m, max_relative = 1e-15);
        assert_relative_eq!(a2 * a2 * v1 + v2, v, max_relative = 1e-12);
    }

    #[test]
    fn stationary_limit() {
        let p = table1();
        assert_relative_eq!(p.variance(1e5), p.stationary_variance(), max_relative = 1e-12);
    }

    #[test]
    fn noiseless_path_is_deterministic_decay() {
        let p = OuParams::new(0.0298, 0.0, -12.5776).unwrap();
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 0.5).collect();
        let path = simulate(&p, &grid, 3).unwrap();
        for (t, x) in path.times.iter().zip(&path.values) {
            assert_relative_eq!(*x, -12.5776 * (-0.0298 * t).exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let grid: Vec<f64> = (0..100).map(f64::from).collect();
        let a = simulate(&table1(), &grid, 42).unwrap();
        let b = simulate(&table1(), &grid, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&table1(), &grid, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_grids() {
        assert!(simulate(&table1(), &[0.0, 1.0, 1.0], 1).is_err());
        assert!(simulate(&table1(), &[1.0, 2.0], 1).is_err());
        assert!(simulate(&table1(), &[], 1).is_err());
    }

    #[test]
    fn sample_mean_after_one_day() {
        let p = table1();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ends: Vec<f64> = (0..n)
            .map(|_| *simulate_with(&p, &[0.0, 24.0], &mut rng).unwrap().values.last().unwrap())
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = -12.5776 * (-0.7152f64).exp();
        assert!((mean - target).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn constant_series_is_rejected() {
        assert!(matches!(mle_fit(&[4.0; 50], 1.0), Err(Error::Estimation(_))));
        assert!(matches!(mle_fit(&[0.0; 50], 1.0), Err(Error::Estimation(_))));
        assert!(mle_fit(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn fit_recovers_table_one() {
        let p = table1();
        let grid: Vec<f64> = (0..100_000).map(f64::from).collect();
        let path = simulate(&p, &grid, 7).unwrap();
        let fit = mle_fit(&path.values, 1.0).unwrap();
        assert!((fit.lambda / p.lambda - 1.0).abs() < 0.10, "{fit:?}");
        assert!((fit.sigma / p.sigma - 1.0).abs() < 0.05, "{fit:?}");
        assert_eq!(fit.x0, p.x0);
    }

    #[test]
    fn fast_reversion_gives_large_lambda_or_rejection() {
        // λ = 5 per hour sampled hourly: a = e^{-5} ≈ 0.0067 sits within a
        // few standard errors of zero.
        let p = OuParams::new(5.0, 1.0, 0.0).unwrap();
        let grid: Vec<f64> = (0..100_000).map(f64::from).collect();
        for seed in 0..5 {
            let path = simulate(&p, &grid, seed).unwrap();
            match mle_fit(&path.values, 1.0) {
                Ok(fit) => assert!(fit.lambda > 3.0, "{fit:?}"),
                Err(Error::Estimation(msg)) => assert!(msg.contains("non-mean-reverting")),
                Err(e) => panic!("{e}"),
            }
        }
    }
}
