//! Property tests over randomly drawn inputs.

use std::sync::Arc;

use chrono::Duration;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use elprice::calibration::{pricing_objective, ObjectiveForm, PricingData};
use elprice::data::{default_epoch, fixed_holidays, generate_synthetic, reference_spec, MarketSeries, ModelParams};
use elprice::measure::{risk_premium, ShiftMode};
use elprice::options::{
    bachelier_call, bachelier_put, black76_call, black76_put, Black76Variant, LognormalOptionInputs,
    NormalOptionInputs,
};
use elprice::ou::transition;
use elprice::seasonality::{self, SeasonalityModel};
use elprice::structural::{forward_price, futures_price, futures_weight};
use elprice::{discount, Conventions, DeliverySet, Ou};

fn reference_model() -> elprice::Model {
    ModelParams::from_spec(&reference_spec(1, 1)).model_q().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn discount_composes(t1 in 0.0..1e5f64, d1 in 0.0..1e5f64, d2 in 0.0..1e5f64, rate in 0.0..0.2f64) {
        let conv = Conventions::default().with_rate(rate);
        let (t2, t3) = (t1 + d1, t1 + d1 + d2);
        let whole = discount(t1, t3, &conv).unwrap();
        let parts = discount(t1, t2, &conv).unwrap() * discount(t2, t3, &conv).unwrap();
        prop_assert!(rel(whole, parts) < 1e-14);
        if rate > 0.0 && d1 > 0.0 {
            prop_assert!(discount(t1, t2, &conv).unwrap() < discount(t1, t1, &conv).unwrap());
        }
    }

    #[test]
    fn ou_transition_chapman_kolmogorov(
        lambda in 1e-4..2.0f64,
        sigma in 0.0..5.0f64,
        x in -20.0..20.0f64,
        dt1 in 0.0..500.0f64,
        dt2 in 0.0..500.0f64,
    ) {
        let ou = Ou::new(lambda, sigma, 0.0).unwrap();
        let (m1, v1) = transition(&ou, x, dt1).unwrap();
        let (m2, v2) = transition(&ou, m1, dt2).unwrap();
        let decay = (-lambda * dt2).exp();
        let (m, v) = transition(&ou, x, dt1 + dt2).unwrap();
        prop_assert!((m - m2).abs() <= 1e-15 * x.abs().max(1.0));
        let composed = decay * decay * v1 + v2;
        prop_assert!(v == composed || rel(v, composed) < 1e-12, "{v} vs {composed}");
    }

    #[test]
    fn normal_option_parity_and_shape(
        f in 1.0..100.0f64,
        k in 1.0..100.0f64,
        dk in 0.01..5.0f64,
        sigma in 0.0..20.0f64,
        span in 0.0..2000.0f64,
    ) {
        let rate = 0.001 / 8760.0;
        let at = |strike: f64| NormalOptionInputs { forward: f, strike, sigma_ut: sigma, span, rate };
        let (c, p) = (bachelier_call(&at(k)).unwrap(), bachelier_put(&at(k)).unwrap());
        let parity = (-rate * span).exp() * (f - k);
        prop_assert!((c - p - parity).abs() <= 1e-12 * f.max(k));
        let (c_up, p_up) = (bachelier_call(&at(k + dk)).unwrap(), bachelier_put(&at(k + dk)).unwrap());
        prop_assert!(c_up <= c + 1e-12 && p_up >= p - 1e-12);
        let c_down = bachelier_call(&at(k - dk)).unwrap();
        prop_assert!(c_up - 2.0 * c + c_down >= -1e-10);
    }

    #[test]
    fn lognormal_option_parity_and_shape(
        f in 1.0..100.0f64,
        k in 2.0..100.0f64,
        dk in 0.01..1.0f64,
        variance in 0.0..1.0f64,
        span in 0.0..2000.0f64,
        printed in any::<bool>(),
    ) {
        let variant = if printed { Black76Variant::AsPrinted } else { Black76Variant::Conventional };
        let rate = 0.001 / 8760.0;
        let at = |strike: f64| LognormalOptionInputs { forward: f, strike, variance, span, rate };
        let (c, p) = (black76_call(&at(k), variant).unwrap(), black76_put(&at(k), variant).unwrap());
        let parity = (-rate * span).exp() * (f - k);
        if !printed {
            prop_assert!((c - p - parity).abs() <= 1e-12 * f.max(k));
        }
        let (c_up, p_up) = (black76_call(&at(k + dk), variant).unwrap(), black76_put(&at(k + dk), variant).unwrap());
        prop_assert!(c_up <= c + 1e-12 && p_up >= p - 1e-12);
        if !printed {
            let c_down = black76_call(&at(k - dk), variant).unwrap();
            prop_assert!(c_up - 2.0 * c + c_down >= -1e-10);
        }
    }

    #[test]
    fn no_premium_without_market_price_of_risk(
        tau in 100.0..20_000.0f64,
        lead in 0.0..2000.0f64,
        x in -15.0..15.0f64,
        exact in any::<bool>(),
    ) {
        let m = reference_model();
        let mode = if exact { ShiftMode::Exact } else { ShiftMode::FirstOrder };
        let t = (tau - lead).max(0.0);
        prop_assert_eq!(risk_premium(&m, 0.0, t, tau, x, mode).unwrap(), 0.0);
    }

    #[test]
    fn futures_is_a_discounted_average_of_delivery_forwards(start in 48.0..8000.0f64, hours in 1usize..48, x in -10.0..10.0f64) {
        let m = reference_model();
        let start = start.floor();
        let t = start - m.conv.delta - 10.0;
        let d = DeliverySet::new((0..hours).map(|h| start + h as f64)).unwrap();
        let fut = futures_price(&m, t, &d, &vec![x; hours]).unwrap() / futures_weight(&m.conv);
        let fwd: Vec<f64> = d.iter().map(|tau| forward_price(&m, t, tau.tau(), x).unwrap()).collect();
        let lo = fwd.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fwd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(fut >= lo * (1.0 - 1e-12) - 1e-12 && fut <= hi * (1.0 + 1e-12) + 1e-12, "{lo} {fut} {hi}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip(
        hours in 1usize..200,
        start_day in 0i64..3000,
        seed in any::<u64>(),
        gaps in 0.0..1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t0 = default_epoch() + Duration::days(start_day);
        let mut draw = |lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng);
        let mut load = Vec::new();
        let mut da = Vec::new();
        let mut id = Vec::new();
        for _ in 0..hours {
            load.push(draw(20.0, 80.0));
            let present = draw(0.0, 1.0) >= gaps;
            da.push(present.then(|| draw(-200.0, 3000.0)));
            id.push(present.then(|| draw(-200.0, 3000.0)));
        }
        let ts = (0..hours as i64).map(|h| t0 + Duration::hours(h)).collect();
        let s = MarketSeries::new(ts, load, da, id).unwrap();
        let mut buf = Vec::new();
        s.to_writer(&mut buf).unwrap();
        let back = MarketSeries::from_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn seasonality_constant_shift_moves_only_the_level(c in -50.0..50.0f64, seed in 0u64..1000) {
        let spec = reference_spec(1, seed);
        let s = generate_synthetic(&elprice::data::SyntheticSpec { hours: 60 * 24, ..spec }).unwrap();
        let cal = Arc::new(fixed_holidays(2014..=2016));
        let obs: Vec<(f64, f64)> = (0..s.len()).map(|k| (s.tau(k), s.load[k])).collect();
        let shifted: Vec<(f64, f64)> = obs.iter().map(|&(t, y)| (t, y + c)).collect();
        let a = seasonality::fit(&obs, s.epoch(), cal.clone()).unwrap().coefficients();
        let b = seasonality::fit(&shifted, s.epoch(), cal).unwrap().coefficients();
        prop_assert!((b[0] - a[0] - c).abs() < 1e-8);
        for (x, y) in a.iter().zip(&b).skip(1) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn pricing_objective_ignores_observation_order(seed in any::<u64>(), printed in any::<bool>()) {
        let (data, p) = small_pricing_data();
        let mut shuffled = data.clone();
        shuffled.hours.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let form = if printed { ObjectiveForm::Printed } else { ObjectiveForm::SumOfSquares };
        let a = pricing_objective(&data, &p.supply, p.theta, form);
        let b = pricing_objective(&shuffled, &p.supply, p.theta, form);
        prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
    }
}

fn small_pricing_data() -> (PricingData, ModelParams) {
    let spec = elprice::data::SyntheticSpec { hours: 45 * 24, ..reference_spec(1, 3) };
    let p = ModelParams::from_spec(&spec);
    let s = generate_synthetic(&spec).unwrap();
    let data = PricingData::new(&s, &p.g_tilde, &p.ou, &p.gamma3, &p.conv).unwrap();
    (data, p)
}

#[test]
fn seasonality_model_is_usable_from_single_precision() {
    let cal = Arc::new(fixed_holidays(2015..=2015));
    let m: SeasonalityModel<f32> = SeasonalityModel::constant(48.0, default_epoch(), cal);
    assert_eq!(m.value(1234.0f32), 48.0);
}
