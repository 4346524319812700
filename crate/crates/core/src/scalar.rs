//! Scalar abstraction for the closed-form layer.
//!
//! Closed-form prices, transitions and seasonality evaluation are written
//! once over [`Scalar`] and instantiated for `f64` (and `f32` where the
//! reduced precision is acceptable). Simulation, estimation and I/O work in
//! `f64` only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `1 - e^{-x}` without cancellation for small `x`.
#[inline]
pub(crate) fn one_minus_exp_neg<T: Scalar>(x: T) -> T {
    -(-x).exp_m1()
}
