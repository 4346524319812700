//! Deterministic seasonality with an annual harmonic and calendar dummies.
//!
//! ```text
//! s(τ) = z0 + z1 τ + z2 sin(2πτ/8760) + z3 cos(2πτ/8760) + DoW_τ + HoD_τ
//! ```
//!
//! The intercept absorbs the Tuesday–Thursday weekday class and hour 0, so
//! those two dummies carry a zero weight. The same form is used for the load
//! seasonality and for the price seasonality `γ3`.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use nalgebra::{DMatrix, DVector};

use crate::conventions::MarketConventions;
use crate::error::{domain, Error, Result};
use crate::scalar::{one_minus_exp_neg, Scalar};

/// Harmonic period in hours (no leap-year handling).
pub const YEAR_HOURS: f64 = 365.0 * 24.0;

/// Number of regression columns: 4 trend/harmonic, 3 weekday, 23 hour.
pub const N_COLUMNS: usize = 4 + 3 + 23;

/// Calendar exceptions that change the weekday class of a date.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Calendar {
    holidays: BTreeSet<NaiveDate>,
    partial_holidays: BTreeSet<NaiveDate>,
    bridge_days: BTreeSet<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayTag {
    Holiday,
    Partial,
    Bridge,
}

impl Calendar {
    pub fn new(
        holidays: impl IntoIterator<Item = NaiveDate>,
        partial_holidays: impl IntoIterator<Item = NaiveDate>,
        bridge_days: impl IntoIterator<Item = NaiveDate>,
    ) -> Result<Self> {
        let mut cal = Self::default();
        for d in holidays {
            cal.insert(d, DayTag::Holiday)?;
        }
        for d in partial_holidays {
            cal.insert(d, DayTag::Partial)?;
        }
        for d in bridge_days {
            cal.insert(d, DayTag::Bridge)?;
        }
        Ok(cal)
    }

    /// Adds a date; a date may carry only one tag.
    pub fn insert(&mut self, date: NaiveDate, tag: DayTag) -> Result<()> {
        if self.tag(date).is_some() {
            return Err(Error::Config(format!("{date} is listed more than once in the calendar")));
        }
        match tag {
            DayTag::Holiday => self.holidays.insert(date),
            DayTag::Partial => self.partial_holidays.insert(date),
            DayTag::Bridge => self.bridge_days.insert(date),
        };
        Ok(())
    }

    pub fn tag(&self, date: NaiveDate) -> Option<DayTag> {
        if self.holidays.contains(&date) {
            Some(DayTag::Holiday)
        } else if self.partial_holidays.contains(&date) {
            Some(DayTag::Partial)
        } else if self.bridge_days.contains(&date) {
            Some(DayTag::Bridge)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.holidays.len() + self.partial_holidays.len() + self.bridge_days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries in date order.
    pub fn entries(&self) -> Vec<(NaiveDate, DayTag)> {
        let mut out: Vec<_> = self
            .holidays
            .iter()
            .map(|d| (*d, DayTag::Holiday))
            .chain(self.partial_holidays.iter().map(|d| (*d, DayTag::Partial)))
            .chain(self.bridge_days.iter().map(|d| (*d, DayTag::Bridge)))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// Parses `YYYY-MM-DD <tag>` lines, tag in {holiday, partial, bridge}.
    /// Blank lines and `#` comments are ignored; the separator may be a comma
    /// or whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cal = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let (Some(date), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(format!("expected `<date> <tag>`, got `{line}`")));
            };
            let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|e| parse_err(format!("bad date `{date}`: {e}")))?;
            let tag = match tag.to_ascii_lowercase().as_str() {
                "holiday" => DayTag::Holiday,
                "partial" => DayTag::Partial,
                "bridge" => DayTag::Bridge,
                other => return Err(parse_err(format!("unknown tag `{other}`"))),
            };
            cal.insert(date, tag).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(cal)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(d, t)| {
                let tag = match t {
                    DayTag::Holiday => "holiday",
                    DayTag::Partial => "partial",
                    DayTag::Bridge => "bridge",
                };
                format!("{} {tag}\n", d.format("%Y-%m-%d"))
            })
            .collect()
    }
}

/// Weekday classes used by the day-of-week dummies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeekdayClass {
    MonFri,
    TueWedThu,
    SatBridgePartial,
    SunHoliday,
}

impl WeekdayClass {
    pub const ALL: [WeekdayClass; 4] = [
        WeekdayClass::MonFri,
        WeekdayClass::TueWedThu,
        WeekdayClass::SatBridgePartial,
        WeekdayClass::SunHoliday,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Holiday membership takes precedence over the weekday.
pub fn weekday_class(date: NaiveDate, cal: &Calendar) -> WeekdayClass {
    match cal.tag(date) {
        Some(DayTag::Holiday) => return WeekdayClass::SunHoliday,
        Some(DayTag::Partial | DayTag::Bridge) => {
            return if date.weekday() == Weekday::Sun {
                WeekdayClass::SunHoliday
            } else {
                WeekdayClass::SatBridgePartial
            }
        }
        None => {}
    }
    match date.weekday() {
        Weekday::Sun => WeekdayClass::SunHoliday,
        Weekday::Sat => WeekdayClass::SatBridgePartial,
        Weekday::Mon | Weekday::Fri => WeekdayClass::MonFri,
        Weekday::Tue | Weekday::Wed | Weekday::Thu => WeekdayClass::TueWedThu,
    }
}

/// Calendar timestamp of `tau` hours after `epoch` (fractional hours are
/// truncated).
pub fn timestamp_at(epoch: NaiveDateTime, tau: f64) -> NaiveDateTime {
    epoch + Duration::hours(tau.floor() as i64)
}

/// Column labels of [`design_row`].
pub fn column_names() -> Vec<String> {
    let mut names: Vec<String> = ["intercept", "trend", "sin_annual", "cos_annual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(["dow_mon_fri", "dow_sat_bridge_partial", "dow_sun_holiday"].map(String::from));
    names.extend((1..24).map(|h| format!("hod_{h:02}")));
    names
}

const DOW_COLUMNS: [WeekdayClass; 3] = [
    WeekdayClass::MonFri,
    WeekdayClass::SatBridgePartial,
    WeekdayClass::SunHoliday,
];

/// Regression row `[1, τ, sin, cos, weekday one-hot (3), hour one-hot (23)]`.
pub fn design_row<T: Scalar>(tau: T, epoch: NaiveDateTime, cal: &Calendar) -> Vec<T> {
    let mut row = vec![T::zero(); N_COLUMNS];
    fill_row(tau, epoch, cal, &mut row);
    row
}

fn fill_row<T: Scalar>(tau: T, epoch: NaiveDateTime, cal: &Calendar, row: &mut [T]) {
    let phase = T::TAU() * tau / T::lit(YEAR_HOURS);
    row.iter_mut().for_each(|v| *v = T::zero());
    row[0] = T::one();
    row[1] = tau;
    row[2] = phase.sin();
    row[3] = phase.cos();
    let ts = timestamp_at(epoch, tau.as_f64());
    let class = weekday_class(ts.date(), cal);
    if let Some(k) = DOW_COLUMNS.iter().position(|c| *c == class) {
        row[4 + k] = T::one();
    }
    let hour = ts.hour() as usize;
    if hour > 0 {
        row[6 + hour] = T::one();
    }
}

/// `amount · (1 - e^{-rate·τ})`, added to the seasonality. Used to express
/// the exact risk-neutral load seasonality in terms of the real-world one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatingOffset<T> {
    pub amount: T,
    pub rate: T,
}

/// Fitted seasonality function.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalityModel<T> {
    /// Level, trend per hour, annual sine and cosine coefficients.
    pub z: [T; 4],
    /// Weights per [`WeekdayClass`] (index order of [`WeekdayClass::ALL`]);
    /// the `TueWedThu` entry is zero.
    pub dow_weights: [T; 4],
    /// Hour-of-day weights; hour 0 is zero.
    pub hod_weights: [T; 24],
    pub epoch: NaiveDateTime,
    pub calendar: Arc<Calendar>,
    pub offset: Option<SaturatingOffset<T>>,
}

impl<T: Scalar> SeasonalityModel<T> {
    pub fn zero(epoch: NaiveDateTime, calendar: Arc<Calendar>) -> Self {
        Self {
            z: [T::zero(); 4],
            dow_weights: [T::zero(); 4],
            hod_weights: [T::zero(); 24],
            epoch,
            calendar,
            offset: None,
        }
    }

    pub fn constant(level: T, epoch: NaiveDateTime, calendar: Arc<Calendar>) -> Self {
        let mut m = Self::zero(epoch, calendar);
        m.z[0] = level;
        m
    }

    /// Builds a model from a coefficient vector ordered as [`design_row`].
    pub fn from_coefficients(coef: &[T], epoch: NaiveDateTime, calendar: Arc<Calendar>) -> Result<Self> {
        if coef.len() != N_COLUMNS {
            return domain(format!("expected {N_COLUMNS} coefficients, got {}", coef.len()));
        }
        let mut m = Self::zero(epoch, calendar);
        m.z.copy_from_slice(&coef[..4]);
        for (k, class) in DOW_COLUMNS.iter().enumerate() {
            m.dow_weights[class.index()] = coef[4 + k];
        }
        m.hod_weights[1..].copy_from_slice(&coef[7..]);
        Ok(m)
    }

    /// Coefficients in [`design_row`] order.
    pub fn coefficients(&self) -> Vec<T> {
        let mut c = Vec::with_capacity(N_COLUMNS);
        c.extend_from_slice(&self.z);
        c.extend(DOW_COLUMNS.iter().map(|k| self.dow_weights[k.index()]));
        c.extend_from_slice(&self.hod_weights[1..]);
        c
    }

    /// Adds `delta` to the linear trend coefficient.
    pub fn with_trend_shift(mut self, delta: T) -> Self {
        self.z[1] = self.z[1] + delta;
        self
    }

    pub fn with_offset(mut self, offset: SaturatingOffset<T>) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn value(&self, tau: T) -> T {
        let mut row = [T::zero(); N_COLUMNS];
        fill_row(tau, self.epoch, &self.calendar, &mut row);
        let base = row
            .iter()
            .zip(self.coefficients())
            .fold(T::zero(), |acc, (x, c)| acc + *x * c);
        match self.offset {
            Some(o) => base + o.amount * one_minus_exp_neg(o.rate * tau),
            None => base,
        }
    }

    pub fn cast<U: Scalar>(&self) -> SeasonalityModel<U> {
        let c = |v: T| U::lit(v.as_f64());
        SeasonalityModel {
            z: self.z.map(c),
            dow_weights: self.dow_weights.map(c),
            hod_weights: self.hod_weights.map(c),
            epoch: self.epoch,
            calendar: self.calendar.clone(),
            offset: self.offset.map(|o| SaturatingOffset {
                amount: c(o.amount),
                rate: c(o.rate),
            }),
        }
    }
}

/// Evaluates `model` at `tau`.
pub fn evaluate<T: Scalar>(model: &SeasonalityModel<T>, tau: T) -> T {
    model.value(tau)
}

/// Least-squares fit together with its regression diagnostics.
#[derive(Debug, Clone)]
pub struct SeasonalityFit {
    pub model: SeasonalityModel<f64>,
    /// Standard errors in [`design_row`] order.
    pub standard_errors: Vec<f64>,
    pub residual_sd: f64,
    /// Largest `|cos|` between the residual vector and a design column;
    /// zero up to rounding at an exact least-squares solution.
    pub max_normal_residual: f64,
    pub n_obs: usize,
}

/// Ordinary least squares fit of `(tau, value)` observations.
pub fn fit(obs: &[(f64, f64)], epoch: NaiveDateTime, cal: Arc<Calendar>) -> Result<SeasonalityModel<f64>> {
    fit_detailed(obs, epoch, cal).map(|f| f.model)
}

/// As [`fit`], returning standard errors and the normal-equation residual.
///
/// Columns are scaled to unit norm and solved by Householder QR; a column
/// whose diagonal entry of `R` falls below `1e-10` of the largest one is
/// reported together with the columns it is a combination of.
pub fn fit_detailed(obs: &[(f64, f64)], epoch: NaiveDateTime, cal: Arc<Calendar>) -> Result<SeasonalityFit> {
    let n = obs.len();
    if n < N_COLUMNS {
        return Err(Error::Estimation(format!(
            "seasonality fit needs at least {N_COLUMNS} observations, got {n}"
        )));
    }
    if let Some((tau, v)) = obs.iter().find(|(t, v)| !t.is_finite() || !v.is_finite() || *t < 0.0) {
        return domain(format!("invalid observation (tau={tau}, value={v})"));
    }
    let mut x = DMatrix::<f64>::zeros(n, N_COLUMNS);
    let mut row = [0.0; N_COLUMNS];
    for (i, (tau, _)) in obs.iter().enumerate() {
        fill_row(*tau, epoch, &cal, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.1));
    let names = column_names();

    let norms: Vec<f64> = (0..N_COLUMNS).map(|j| x.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|v| *v == 0.0) {
        return Err(Error::Estimation(format!(
            "rank-deficient design: column `{}` is identically zero",
            names[j]
        )));
    }
    let mut xs = x.clone();
    for (j, s) in norms.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = xs.qr();
    let r = qr.r();
    let rmax = (0..N_COLUMNS).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..N_COLUMNS {
        if r[(j, j)].abs() <= 1e-10 * rmax {
            let partners = collinear_partners(&r, j);
            let list = partners.iter().map(|k| format!("`{}`", names[*k])).collect::<Vec<_>>();
            return Err(Error::Estimation(format!(
                "rank-deficient design: column `{}` is collinear with {}",
                names[j],
                if list.is_empty() { "preceding columns".to_string() } else { list.join(", ") }
            )));
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, N_COLUMNS).into_owned();
    let scaled = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Estimation("triangular solve failed".into()))?;
    let coef: Vec<f64> = scaled.iter().zip(&norms).map(|(c, s)| c / s).collect();

    let fitted = &x * DVector::from_vec(coef.clone());
    let resid = &y - fitted;
    let rnorm = resid.norm();
    let max_normal_residual = if rnorm == 0.0 {
        0.0
    } else {
        (x.transpose() * &resid)
            .iter()
            .zip(&norms)
            .map(|(v, s)| (v / (s * rnorm)).abs())
            .fold(0.0, f64::max)
    };
    let dof = (n - N_COLUMNS).max(1) as f64;
    let residual_sd = (resid.norm_squared() / dof).sqrt();

    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(N_COLUMNS, N_COLUMNS))
        .ok_or_else(|| Error::Estimation("triangular inverse failed".into()))?;
    let standard_errors = (0..N_COLUMNS)
        .map(|j| residual_sd * rinv.row(j).norm() / norms[j])
        .collect();

    Ok(SeasonalityFit {
        model: SeasonalityModel::from_coefficients(&coef, epoch, cal)?,
        standard_errors,
        residual_sd,
        max_normal_residual,
        n_obs: n,
    })
}

fn collinear_partners(r: &DMatrix<f64>, j: usize) -> Vec<usize> {
    if j == 0 {
        return Vec::new();
    }
    let head = r.view((0, 0), (j, j)).into_owned();
    let col = r.view((0, j), (j, 1)).into_owned();
    match head.solve_upper_triangular(&col) {
        Some(c) => (0..j).filter(|k| c[*k].abs() > 1e-6).collect(),
        None => Vec::new(),
    }
}

/// Price mixture `(I^M + S^M) / (1 + e^{-r_h δ})` used to estimate `γ3`.
pub fn gamma3_target(day_ahead: &[f64], intraday: &[f64], conv: &MarketConventions<f64>) -> Result<Vec<f64>> {
    if day_ahead.len() != intraday.len() {
        return domain(format!(
            "day-ahead and intraday series are misaligned ({} vs {} values)",
            day_ahead.len(),
            intraday.len()
        ));
    }
    let denom = 1.0 + (-conv.hourly_rate() * conv.delta).exp();
    Ok(day_ahead.iter().zip(intraday).map(|(s, i)| (i + s) / denom).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn epoch() -> NaiveDateTime {
        d(2015, 1, 1).and_hms_opt(0, 0, 0).unwrap()
    }

    fn cal() -> Arc<Calendar> {
        Arc::new(
            Calendar::new(
                [d(2015, 1, 1), d(2015, 12, 25), d(2017, 12, 25)],
                [d(2015, 1, 6)],
                [d(2015, 5, 15)],
            )
            .unwrap(),
        )
    }

    fn known_model() -> SeasonalityModel<f64> {
        let mut coef = vec![0.0; N_COLUMNS];
        coef[0] = 55.0;
        coef[1] = -2e-4;
        coef[2] = 3.0;
        coef[3] = 6.5;
        coef[4] = -1.2;
        coef[5] = -7.0;
        coef[6] = -11.0;
        for h in 1..24 {
            coef[6 + h] = 8.0 * ((h as f64 - 4.0) * std::f64::consts::PI / 12.0).sin();
        }
        SeasonalityModel::from_coefficients(&coef, epoch(), cal()).unwrap()
    }

    #[test]
    fn weekday_classes() {
        let c = Calendar::new([d(2017, 12, 25), d(2018, 5, 10)], [], [d(2018, 5, 11)]).unwrap();
        assert_eq!(weekday_class(d(2017, 8, 9), &c), WeekdayClass::TueWedThu);
        // 2017-12-25 is a Monday
        assert_eq!(weekday_class(d(2017, 12, 25), &c), WeekdayClass::SunHoliday);
        // Friday after a Thursday holiday
        assert_eq!(weekday_class(d(2018, 5, 11), &c), WeekdayClass::SatBridgePartial);
        assert_eq!(weekday_class(d(2017, 12, 18), &c), WeekdayClass::MonFri);
        assert_eq!(weekday_class(d(2017, 12, 22), &c), WeekdayClass::MonFri);
        assert_eq!(weekday_class(d(2017, 12, 23), &c), WeekdayClass::SatBridgePartial);
        assert_eq!(weekday_class(d(2017, 12, 24), &c), WeekdayClass::SunHoliday);
    }

    #[test]
    fn calendar_sets_are_disjoint() {
        assert!(Calendar::new([d(2017, 1, 1)], [d(2017, 1, 1)], []).is_err());
    }

    #[test]
    fn calendar_file_format() {
        let text = "# holidays\n2017-12-25 holiday\n2017-12-26, holiday\n\n2017-10-31 partial\n2018-05-11 bridge\n";
        let c = Calendar::parse(text).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.tag(d(2017, 10, 31)), Some(DayTag::Partial));
        assert_eq!(Calendar::parse(&c.to_text()).unwrap(), c);
        match Calendar::parse("2017-12-25 holiday\n2017-13-01 holiday\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(Calendar::parse("2017-12-25 feast\n").is_err());
    }

    #[test]
    fn harmonic_terms() {
        let c = Calendar::default();
        let r0 = design_row(0.0f64, epoch(), &c);
        assert_eq!(r0[2], 0.0);
        assert_eq!(r0[3], 1.0);
        let rq = design_row(YEAR_HOURS / 4.0, epoch(), &c);
        assert_relative_eq!(rq[2], 1.0, max_relative = 1e-15);
        assert!(rq[3].abs() < 1e-15);
    }

    #[test]
    fn dummies_repeat_after_one_day_in_same_class() {
        let c = Calendar::default();
        // 2015-01-06 (Tue) 05:00 and 2015-01-07 (Wed) 05:00
        let tau = (5 * 24 + 5) as f64;
        let a = design_row(tau, epoch(), &c);
        let b = design_row(tau + 24.0, epoch(), &c);
        assert_eq!(a[4..], b[4..]);
        assert_eq!(a[4..].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn harmonic_period() {
        let c = Calendar::default();
        let a = design_row(1234.5f64, epoch(), &c);
        let b = design_row(1234.5 + YEAR_HOURS, epoch(), &c);
        assert_relative_eq!(a[2], b[2], epsilon = 1e-12);
        assert_relative_eq!(a[3], b[3], epsilon = 1e-12);
    }

    #[test]
    fn zero_and_constant_models() {
        let z = SeasonalityModel::<f64>::zero(epoch(), cal());
        let k = SeasonalityModel::constant(42.0, epoch(), cal());
        for tau in [0.0, 13.0, 5000.5, 30000.0] {
            assert_eq!(evaluate(&z, tau), 0.0);
            assert_eq!(evaluate(&k, tau), 42.0);
        }
    }

    #[test]
    fn noiseless_fit_recovers_coefficients() {
        let truth = known_model();
        let obs: Vec<(f64, f64)> = (0..3 * 8760).map(|k| (k as f64, truth.value(k as f64))).collect();
        let f = fit_detailed(&obs, epoch(), cal()).unwrap();
        for (a, b) in f.model.coefficients().iter().zip(truth.coefficients()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(f.residual_sd < 1e-10, "{}", f.residual_sd);
        for (tau, v) in obs.iter().step_by(977) {
            assert_relative_eq!(f.model.value(*tau), *v, max_relative = 1e-10);
        }
    }

    #[test]
    fn noisy_fit_within_three_standard_errors() {
        let truth = known_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let obs: Vec<(f64, f64)> = (0..100_000)
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (k as f64, truth.value(k as f64) + z)
            })
            .collect();
        let f = fit_detailed(&obs, epoch(), cal()).unwrap();
        assert!(f.max_normal_residual < 1e-9, "{}", f.max_normal_residual);
        assert!((f.residual_sd - 1.0).abs() < 0.01);
        let mut worst: f64 = 0.0;
        for ((a, b), se) in f.model.coefficients().iter().zip(truth.coefficients()).zip(&f.standard_errors) {
            worst = worst.max((a - b).abs() / se);
        }
        // 30 coefficients: allow the largest z-score up to 3.5 (family-wise ~1.4% miss)
        assert!(worst < 3.5, "worst z = {worst}");
    }

    #[test]
    fn too_short_series() {
        let obs: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(fit(&obs, epoch(), cal()), Err(Error::Estimation(_))));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        // only hour 0 observations: every hour dummy is zero
        let obs: Vec<(f64, f64)> = (0..200).map(|k| ((k * 24) as f64, 1.0)).collect();
        let err = fit(&obs, epoch(), cal()).unwrap_err().to_string();
        assert!(err.contains("hod_01"), "{err}");

        // no Tuesday-Thursday data: the three weekday dummies sum to the intercept
        let c = Arc::new(Calendar::default());
        let obs: Vec<(f64, f64)> = (0..8760)
            .filter(|k| {
                let wd = timestamp_at(epoch(), *k as f64).weekday();
                matches!(wd, Weekday::Mon | Weekday::Sat | Weekday::Sun)
            })
            .map(|k| (k as f64, (k % 7) as f64))
            .collect();
        let err = fit(&obs, epoch(), c).unwrap_err().to_string();
        assert!(err.contains("`dow_sun_holiday` is collinear"), "{err}");
        assert!(err.contains("`intercept`") && err.contains("`dow_mon_fri`"), "{err}");
    }

    #[test]
    fn constant_shift_moves_only_the_level() {
        let truth = known_model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<(f64, f64)> = (0..20_000)
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (k as f64, truth.value(k as f64) + z)
            })
            .collect();
        let shifted: Vec<(f64, f64)> = obs.iter().map(|(t, v)| (*t, v + 17.25)).collect();
        let a = fit(&obs, epoch(), cal()).unwrap().coefficients();
        let b = fit(&shifted, epoch(), cal()).unwrap().coefficients();
        assert!((b[0] - a[0] - 17.25).abs() < 1e-8);
        for j in 1..N_COLUMNS {
            assert!((b[j] - a[j]).abs() < 1e-8 * (1.0 + a[j].abs()), "column {j}");
        }
    }

    #[test]
    fn fit_ignores_observation_order() {
        let truth = known_model();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut obs: Vec<(f64, f64)> = (0..10_000)
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (k as f64, truth.value(k as f64) + z)
            })
            .collect();
        let a = fit(&obs, epoch(), cal()).unwrap().coefficients();
        obs.reverse();
        obs.swap(17, 4000);
        let b = fit(&obs, epoch(), cal()).unwrap().coefficients();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn gamma3_mixture() {
        let zero = MarketConventions::<f64>::default().with_rate(0.0);
        assert_eq!(gamma3_target(&[50.0], &[50.0], &zero).unwrap(), vec![50.0]);
        assert_eq!(gamma3_target(&[40.0], &[60.0], &zero).unwrap(), vec![50.0]);
        let c = MarketConventions::<f64>::default();
        let v = gamma3_target(&[40.0], &[60.0], &c).unwrap()[0];
        assert_relative_eq!(v, 100.0 / (1.0 + (-0.001f64 * 24.0 / 8760.0).exp()), max_relative = 1e-15);
        assert!(gamma3_target(&[1.0, 2.0], &[1.0], &c).is_err());
    }

    #[test]
    fn saturating_offset() {
        let m = SeasonalityModel::constant(10.0, epoch(), cal()).with_offset(SaturatingOffset { amount: 2.0, rate: 0.5 });
        assert_eq!(m.value(0.0), 10.0);
        assert_relative_eq!(m.value(4.0), 10.0 + 2.0 * (1.0 - (-2.0f64).exp()), max_relative = 1e-15);
    }
}
