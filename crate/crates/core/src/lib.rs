//! Structural electricity price model driven by system load.
//!
//! Load is a deterministic seasonality plus an Ornstein–Uhlenbeck deviation,
//! and a two-branch exponential supply curve maps load to an intrinsic price.
//! Forward, intraday, day-ahead and futures prices are conditional
//! expectations of that price under a risk-neutral measure; a constant
//! Girsanov drift links it to the real-world measure and yields an explicit
//! risk premium.
//!
//! The pricing kernels are generic over [`Scalar`] (`f32` or `f64`);
//! estimation, simulation and I/O work in `f64`. The aliases at the crate
//! root name the `f64` instantiations.

pub mod calibration;
pub mod conventions;
pub mod data;
pub mod error;
pub mod mc;
pub mod measure;
pub mod numerics;
pub mod options;
pub mod oracle;
pub mod ou;
pub mod scalar;
pub mod seasonality;
pub mod structural;

pub use conventions::{discount, DeliverySet, DeliveryTime, MarketConventions};
pub use error::{Error, Result};
pub use measure::{GirsanovParam, ShiftMode};
pub use ou::OuParams;
pub use scalar::Scalar;
pub use seasonality::{Calendar, SeasonalityModel};
pub use structural::{Branch, ModelQ, SupplyParams};

pub type Conventions = MarketConventions<f64>;
pub type Ou = OuParams<f64>;
pub type Supply = SupplyParams<f64>;
pub type Seasonality = SeasonalityModel<f64>;
pub type Model = ModelQ<f64>;
pub type Deliveries = DeliverySet<f64>;

pub type Conventions32 = MarketConventions<f32>;
pub type Model32 = ModelQ<f32>;
