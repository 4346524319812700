//! Market conventions, delivery times and discounting.
//!
//! Time is measured in hours since the epoch of the data set. The annual
//! risk-free rate is converted once into an hourly rate
//! `r_h = annual_rate / hours_per_year`, which is used in every exponent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Delivery length, day length and risk-free rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConventions<T> {
    /// Delivery length ε in hours.
    #[serde(rename = "epsilon_hours")]
    pub epsilon: T,
    /// Day length δ in hours.
    #[serde(rename = "delta_hours")]
    pub delta: T,
    /// Dimensionless annual risk-free rate.
    pub annual_rate: T,
    pub hours_per_year: T,
}

impl<T: Scalar> Default for MarketConventions<T> {
    fn default() -> Self {
        Self {
            epsilon: T::one(),
            delta: T::lit(24.0),
            annual_rate: T::lit(0.001),
            hours_per_year: T::lit(365.0 * 24.0),
        }
    }
}

impl<T: Scalar> MarketConventions<T> {
    pub fn new(epsilon: T, delta: T, annual_rate: T, hours_per_year: T) -> Result<Self> {
        let conv = Self {
            epsilon,
            delta,
            annual_rate,
            hours_per_year,
        };
        conv.validate()?;
        Ok(conv)
    }

    /// Same conventions with a different annual rate.
    pub fn with_rate(self, annual_rate: T) -> Self {
        Self {
            annual_rate,
            ..self
        }
    }

    pub fn with_epsilon(self, epsilon: T) -> Self {
        Self { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !(self.delta > T::zero()) {
            return domain(format!(
                "delivery length and day length must be positive (epsilon={}, delta={})",
                self.epsilon, self.delta
            ));
        }
        if !(self.hours_per_year > T::zero()) {
            return domain(format!(
                "hours_per_year must be positive, got {}",
                self.hours_per_year
            ));
        }
        let rh = self.hourly_rate();
        if !rh.is_finite() || rh < T::zero() {
            return domain(format!(
                "hourly rate must be finite and non-negative, got {rh}"
            ));
        }
        Ok(())
    }

    /// Hourly continuously-compounded rate.
    #[inline]
    pub fn hourly_rate(&self) -> T {
        self.annual_rate / self.hours_per_year
    }

    /// `e^{r_h · span}`.
    #[inline]
    pub fn growth(&self, span: T) -> T {
        (self.hourly_rate() * span).exp()
    }
}

impl MarketConventions<f64> {
    /// Reads conventions from a key/value file
    /// (`epsilon_hours`, `delta_hours`, `annual_rate`, `hours_per_year`).
    /// Missing keys keep their defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv_str(&text)
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Partial {
            epsilon_hours: Option<f64>,
            delta_hours: Option<f64>,
            annual_rate: Option<f64>,
            hours_per_year: Option<f64>,
        }
        let p: Partial = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = Self::default();
        Self::new(
            p.epsilon_hours.unwrap_or(d.epsilon),
            p.delta_hours.unwrap_or(d.delta),
            p.annual_rate.unwrap_or(d.annual_rate),
            p.hours_per_year.unwrap_or(d.hours_per_year),
        )
    }
}

/// Discount factor `e^{-r_h (t2 - t1)}` between two times in hours.
pub fn discount<T: Scalar>(t1: T, t2: T, conv: &MarketConventions<T>) -> Result<T> {
    if t2 < t1 {
        return domain(format!("discount requires t2 >= t1 (t1={t1}, t2={t2})"));
    }
    Ok((-conv.hourly_rate() * (t2 - t1)).exp())
}

/// Start of a delivery period `[tau, tau + epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DeliveryTime<T>(T);

impl<T: Scalar> DeliveryTime<T> {
    pub fn new(tau: T) -> Result<Self> {
        if !(tau >= T::zero()) {
            return domain(format!("delivery time must be >= 0, got {tau}"));
        }
        Ok(Self(tau))
    }

    #[inline]
    pub fn tau(self) -> T {
        self.0
    }

    /// Ex-post delivery time `tau + epsilon`.
    #[inline]
    pub fn ex_post(self, conv: &MarketConventions<T>) -> T {
        self.0 + conv.epsilon
    }
}

/// Strictly increasing, non-empty set of delivery times.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliverySet<T> {
    taus: Vec<DeliveryTime<T>>,
}

impl<T: Scalar> DeliverySet<T> {
    pub fn new(taus: impl IntoIterator<Item = T>) -> Result<Self> {
        let taus = taus
            .into_iter()
            .map(DeliveryTime::new)
            .collect::<Result<Vec<_>>>()?;
        if taus.is_empty() {
            return domain("delivery set must not be empty");
        }
        if let Some(w) = taus.windows(2).find(|w| !(w[0].tau() < w[1].tau())) {
            return domain(format!(
                "delivery times must be strictly increasing ({} then {})",
                w[0].tau(),
                w[1].tau()
            ));
        }
        Ok(Self { taus })
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = DeliveryTime<T>> + '_ {
        self.taus.iter().copied()
    }

    pub fn first(&self) -> DeliveryTime<T> {
        self.taus[0]
    }

    pub fn last(&self) -> DeliveryTime<T> {
        self.taus[self.taus.len() - 1]
    }

    /// Stopped times `t ∧ (tau_i - delta)` at which each forward is frozen.
    pub fn stopped_times(&self, t: T, conv: &MarketConventions<T>) -> Vec<T> {
        self.taus
            .iter()
            .map(|d| t.min(d.tau() - conv.delta))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_interval_is_one() {
        let c = MarketConventions::<f64>::default();
        assert_eq!(discount(5.0, 5.0, &c).unwrap(), 1.0);
    }

    #[test]
    fn one_year_at_annual_rate() {
        let c = MarketConventions::<f64>::default();
        assert_relative_eq!(
            discount(0.0, 8760.0, &c).unwrap(),
            (-0.001f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(discount(0.0, 8760.0, &c).unwrap(), 0.9990005, epsilon = 1e-7);
    }

    #[test]
    fn one_day_matches_hourly_compounding() {
        let c = MarketConventions::<f64>::default();
        let direct = discount(0.0, 24.0, &c).unwrap();
        let stepped: f64 = (0..24).map(|_| (-0.001f64 / 8760.0).exp()).product();
        assert_relative_eq!(direct, stepped, max_relative = 1e-14);
        assert_relative_eq!(direct, (-0.001f64 * 24.0 / 8760.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn reversed_interval_is_rejected() {
        let c = MarketConventions::<f64>::default();
        assert!(matches!(discount(2.0, 1.0, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let c = MarketConventions::<f32>::default();
        let d = discount(0.0f32, 8760.0, &c).unwrap();
        assert!((d - 0.999_000_5).abs() < 1e-6);
    }

    #[test]
    fn invalid_conventions() {
        assert!(MarketConventions::new(0.0, 24.0, 0.001, 8760.0).is_err());
        assert!(MarketConventions::new(1.0, 24.0, -0.1, 8760.0).is_err());
        assert!(MarketConventions::new(1.0, 24.0, 0.001, 0.0).is_err());
    }

    #[test]
    fn conventions_from_key_value_text() {
        let c = MarketConventions::from_kv_str("epsilon_hours = 0.25\nannual_rate = 0.02\n").unwrap();
        assert_eq!(c.epsilon, 0.25);
        assert_eq!(c.delta, 24.0);
        assert_eq!(c.annual_rate, 0.02);
        assert!(MarketConventions::from_kv_str("epsilon = 1").is_err());
    }

    #[test]
    fn delivery_set_ordering() {
        assert!(DeliverySet::new([1.0, 2.0, 3.0]).is_ok());
        assert!(DeliverySet::new([1.0, 1.0]).is_err());
        assert!(DeliverySet::<f64>::new([]).is_err());
        assert!(DeliverySet::new([-1.0]).is_err());
        let c = MarketConventions::<f64>::default();
        let s = DeliverySet::new([30.0, 50.0]).unwrap();
        assert_eq!(s.stopped_times(10.0, &c), vec![6.0, 10.0]);
    }
}
