//! Market data: hourly series, CSV I/O, parameter files and a synthetic
//! generator driven by the structural model.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conventions::MarketConventions;
use crate::error::{domain, Error, Result};
use crate::measure::{ou_shift_p, risk_neutral_seasonality, ShiftMode};
use crate::ou::{transition, OuParams};
use crate::seasonality::{column_names, Calendar, DayTag, SeasonalityModel, N_COLUMNS};
use crate::structural::{day_ahead_price, intraday_price, ModelQ, SupplyParams};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const CSV_HEADER: [&str; 4] = ["timestamp", "load", "day_ahead", "intraday"];

/// Hourly load with optional day-ahead and intraday prices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub load: Vec<f64>,
    pub day_ahead: Vec<Option<f64>>,
    pub intraday: Vec<Option<f64>>,
}

impl MarketSeries {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        load: Vec<f64>,
        day_ahead: Vec<Option<f64>>,
        intraday: Vec<Option<f64>>,
    ) -> Result<Self> {
        let s = Self {
            timestamps,
            load,
            day_ahead,
            intraday,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if self.load.len() != n || self.day_ahead.len() != n || self.intraday.len() != n {
            return domain("series columns have different lengths");
        }
        if n == 0 {
            return domain("series is empty");
        }
        for (k, w) in self.timestamps.windows(2).enumerate() {
            if w[1] - w[0] != Duration::hours(1) {
                return domain(format!(
                    "timestamps must be consecutive hours: {} follows {} at row {}",
                    w[1],
                    w[0],
                    k + 1
                ));
            }
        }
        if let Some(k) = self.load.iter().position(|v| !v.is_finite()) {
            return domain(format!("load at row {k} is not finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn epoch(&self) -> NaiveDateTime {
        self.timestamps[0]
    }

    /// Hours since the first timestamp.
    pub fn tau(&self, k: usize) -> f64 {
        k as f64
    }

    /// Rows with both prices present.
    pub fn aligned_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.day_ahead[k].is_some() && self.intraday[k].is_some())
    }

    /// First and last timestamp with both prices, and the number of such rows.
    pub fn price_coverage(&self) -> Option<(NaiveDateTime, NaiveDateTime, usize)> {
        let rows: Vec<usize> = self.aligned_rows().collect();
        Some((self.timestamps[*rows.first()?], self.timestamps[*rows.last()?], rows.len()))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut idx = [0usize; 4];
        for (i, name) in CSV_HEADER.iter().enumerate() {
            idx[i] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("missing column `{name}`"),
                })?;
        }
        let (mut ts, mut load, mut da, mut id) = (vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |i: usize| rec.get(idx[i]).unwrap_or("");
            let perr = |message: String| Error::Parse { line, message };
            let t = NaiveDateTime::parse_from_str(field(0), TIMESTAMP_FORMAT)
                .map_err(|e| perr(format!("bad timestamp `{}`: {e}", field(0))))?;
            if let Some(prev) = ts.last() {
                if t == *prev {
                    return Err(perr(format!("duplicated timestamp {t}")));
                }
                if t < *prev {
                    return Err(perr(format!("timestamp {t} is earlier than {prev}")));
                }
                if t - *prev != Duration::hours(1) {
                    return Err(perr(format!("gap in load series between {prev} and {t}")));
                }
            }
            let l = field(1);
            if l.is_empty() {
                return Err(perr("load is missing".into()));
            }
            let l: f64 = l.parse().map_err(|_| perr(format!("bad load `{l}`")))?;
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| perr(format!("bad {what} `{s}`")))
                }
            };
            ts.push(t);
            load.push(l);
            da.push(opt(field(2), "day-ahead price")?);
            id.push(opt(field(3), "intraday price")?);
        }
        Self::new(ts, load, da, id)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.len() {
            wtr.write_record([
                self.timestamps[k].format(TIMESTAMP_FORMAT).to_string(),
                self.load[k].to_string(),
                opt(self.day_ahead[k]),
                opt(self.intraday[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }
}

/// Girsanov parameter used by the generator, constant or by calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSchedule {
    Constant(f64),
    /// One value per month counted from the first month of the series,
    /// repeated cyclically.
    Monthly(Vec<f64>),
}

impl ThetaSchedule {
    pub fn at(&self, month_index: usize) -> f64 {
        match self {
            ThetaSchedule::Constant(v) => *v,
            ThetaSchedule::Monthly(v) => v[month_index % v.len()],
        }
    }
}

/// Months elapsed between the calendar months of `start` and `t`.
pub fn month_index(start: NaiveDateTime, t: NaiveDateTime) -> usize {
    let a = start.year() * 12 + start.month0() as i32;
    let b = t.year() * 12 + t.month0() as i32;
    (b - a).max(0) as usize
}

/// Everything needed to generate a synthetic market.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    /// Real-world dynamics of the load deviation; `x0` is its start value.
    pub ou: OuParams<f64>,
    pub supply: SupplyParams<f64>,
    /// Real-world load seasonality.
    pub g_tilde: SeasonalityModel<f64>,
    pub gamma3: SeasonalityModel<f64>,
    pub theta: ThetaSchedule,
    pub conv: MarketConventions<f64>,
    pub hours: usize,
    /// First row with prices; earlier rows carry load only.
    pub price_start: usize,
    pub noise_intraday: f64,
    pub noise_day_ahead: f64,
    pub seed: u64,
}

/// Fixed-date public holidays (1 Jan, 1 May, 3 Oct, 25 and 26 Dec) for the
/// given years.
pub fn fixed_holidays(years: std::ops::RangeInclusive<i32>) -> Calendar {
    let mut cal = Calendar::default();
    for y in years {
        for (m, d) in [(1, 1), (5, 1), (10, 3), (12, 25), (12, 26)] {
            cal.insert(NaiveDate::from_ymd_opt(y, m, d).expect("valid date"), DayTag::Holiday)
                .expect("distinct dates");
        }
    }
    cal
}

pub fn default_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// A load profile in GW-like units: level 48, annual swing, weekend and
/// holiday dips, and a daytime bump. The level puts a good share of hours on
/// both sides of the supply-curve kink, so both branches are identifiable.
pub fn default_load_seasonality(epoch: NaiveDateTime, cal: Arc<Calendar>) -> SeasonalityModel<f64> {
    let mut m = SeasonalityModel::constant(48.0, epoch, cal);
    m.z[2] = 2.0;
    m.z[3] = 4.0;
    m.dow_weights = [1.0, 0.0, -6.0, -10.0];
    for h in 1..24 {
        let hf = h as f64;
        m.hod_weights[h] = 7.0 * (std::f64::consts::PI * (hf - 3.0) / 24.0).sin().max(0.0) - 1.0 + 0.05 * hf;
    }
    m
}

/// A modest price seasonality: level 30 with a morning and evening shape.
pub fn default_price_seasonality(epoch: NaiveDateTime, cal: Arc<Calendar>) -> SeasonalityModel<f64> {
    let mut m = SeasonalityModel::constant(30.0, epoch, cal);
    m.z[2] = 1.0;
    m.dow_weights = [0.5, 0.0, -2.0, -3.0];
    for h in 1..24 {
        let hf = h as f64;
        m.hod_weights[h] = 3.0 * (2.0 * std::f64::consts::PI * (hf - 8.0) / 24.0).sin();
    }
    m
}

/// Reference parameters (the published German market estimates) over `years`
/// years of hourly data starting at
/// [`default_epoch`].
pub fn reference_spec(years: usize, seed: u64) -> SyntheticSpec {
    let epoch = default_epoch();
    let cal = Arc::new(fixed_holidays(2014..=2015 + years as i32));
    SyntheticSpec {
        ou: OuParams::new(0.0298, 1.4988, -12.5776).expect("valid"),
        supply: SupplyParams::new(0.1949, -0.1796, 43.8799, 37.4548).expect("valid"),
        g_tilde: default_load_seasonality(epoch, cal.clone()),
        gamma3: default_price_seasonality(epoch, cal),
        theta: ThetaSchedule::Constant(-0.0036),
        conv: MarketConventions::default(),
        hours: years * 8760,
        price_start: 0,
        noise_intraday: 0.5,
        noise_day_ahead: 0.5,
        seed,
    }
}

/// Simulates `X̃` under the real-world measure, sets load `= g̃ + X̃` and
/// computes model intraday and day-ahead prices (first-order measure change)
/// plus independent Gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MarketSeries> {
    spec.ou.validate()?;
    spec.supply.validate()?;
    spec.conv.validate()?;
    if spec.hours < 28 * 24 {
        return domain("synthetic span must cover at least one month");
    }
    let delta = spec.conv.delta;
    if delta.fract() != 0.0 {
        return domain("synthetic generator needs an integer number of hours per day");
    }
    let lag = delta as usize;
    let epoch = spec.g_tilde.epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Vec::with_capacity(spec.hours);
    let mut xv = spec.ou.x0;
    x.push(xv);
    for _ in 1..spec.hours {
        let (m, v) = transition(&spec.ou, xv, 1.0)?;
        let z: f64 = StandardNormal.sample(&mut rng);
        xv = m + v.sqrt() * z;
        x.push(xv);
    }
    let timestamps: Vec<NaiveDateTime> = (0..spec.hours).map(|k| epoch + Duration::hours(k as i64)).collect();
    let load: Vec<f64> = (0..spec.hours).map(|k| spec.g_tilde.value(k as f64) + x[k]).collect();

    let mut models: BTreeMap<u64, ModelQ<f64>> = BTreeMap::new();
    let mut model_for = |theta: f64| -> Result<ModelQ<f64>> {
        let key = theta.to_bits();
        if let Some(m) = models.get(&key) {
            return Ok(m.clone());
        }
        let g = risk_neutral_seasonality(&spec.g_tilde, &spec.ou, theta, ShiftMode::FirstOrder);
        let m = ModelQ::new(spec.ou, spec.supply, g, spec.gamma3.clone(), spec.conv)?;
        models.insert(key, m.clone());
        Ok(m)
    };
    let mut day_ahead = vec![None; spec.hours];
    let mut intraday = vec![None; spec.hours];
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    for k in spec.price_start.max(lag)..spec.hours.saturating_sub(1) {
        let tau = k as f64;
        let theta = spec.theta.at(month_index(epoch, timestamps[k]));
        let m = model_for(theta)?;
        let x_id = ou_shift_p(x[k], &spec.ou, theta, tau)?;
        let x_da = ou_shift_p(x[k - lag], &spec.ou, theta, tau - delta)?;
        let z1: f64 = StandardNormal.sample(&mut noise_rng);
        let z2: f64 = StandardNormal.sample(&mut noise_rng);
        intraday[k] = Some(intraday_price(&m, tau, x_id)? + spec.noise_intraday * z1);
        day_ahead[k] = Some(day_ahead_price(&m, tau, x_da)? + spec.noise_day_ahead * z2);
    }
    MarketSeries::new(timestamps, load, day_ahead, intraday)
}

/// Serializable model parameters: the real-world load seasonality, the OU
/// dynamics, the supply curve, the Girsanov parameter and the price
/// seasonality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub conventions: ConventionsSection,
    pub ou: OuParams<f64>,
    pub supply: SupplyParams<f64>,
    pub theta: f64,
    /// `YYYY-MM-DDTHH:MM:SS` of hour 0.
    pub epoch: String,
    /// `YYYY-MM-DD tag` entries.
    #[serde(default)]
    pub calendar: Vec<String>,
    /// Coefficients in design-column order, see [`column_names`].
    pub g_tilde: Vec<f64>,
    pub gamma3: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionsSection {
    pub epsilon_hours: f64,
    pub delta_hours: f64,
    pub annual_rate: f64,
    pub hours_per_year: f64,
}

impl Default for ConventionsSection {
    fn default() -> Self {
        let d = MarketConventions::<f64>::default();
        Self {
            epsilon_hours: d.epsilon,
            delta_hours: d.delta,
            annual_rate: d.annual_rate,
            hours_per_year: d.hours_per_year,
        }
    }
}

/// Parsed [`ModelFile`].
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub conv: MarketConventions<f64>,
    pub ou: OuParams<f64>,
    pub supply: SupplyParams<f64>,
    pub theta: f64,
    pub g_tilde: SeasonalityModel<f64>,
    pub gamma3: SeasonalityModel<f64>,
}

impl ModelParams {
    /// Risk-neutral model with the first-order seasonality relation.
    pub fn model_q(&self) -> Result<ModelQ<f64>> {
        let g = risk_neutral_seasonality(&self.g_tilde, &self.ou, self.theta, ShiftMode::FirstOrder);
        ModelQ::new(self.ou, self.supply, g, self.gamma3.clone(), self.conv)
    }

    pub fn calendar(&self) -> Arc<Calendar> {
        self.g_tilde.calendar.clone()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ModelFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let c = f.conventions;
        let conv = MarketConventions::new(c.epsilon_hours, c.delta_hours, c.annual_rate, c.hours_per_year)?;
        f.ou.validate()?;
        f.supply.validate()?;
        if !f.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        let epoch = NaiveDateTime::parse_from_str(&f.epoch, TIMESTAMP_FORMAT)
            .map_err(|e| Error::Config(format!("bad epoch `{}`: {e}", f.epoch)))?;
        let cal = Arc::new(Calendar::parse(&f.calendar.join("\n"))?);
        let seas = |coef: &[f64], what: &str| {
            SeasonalityModel::from_coefficients(coef, epoch, cal.clone())
                .map_err(|_| Error::Config(format!("`{what}` needs {N_COLUMNS} coefficients, got {}", coef.len())))
        };
        Ok(Self {
            conv,
            ou: f.ou,
            supply: f.supply,
            theta: f.theta,
            g_tilde: seas(&f.g_tilde, "g_tilde")?,
            gamma3: seas(&f.gamma3, "gamma3")?,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        let c = &self.conv;
        let file = ModelFile {
            conventions: ConventionsSection {
                epsilon_hours: c.epsilon,
                delta_hours: c.delta,
                annual_rate: c.annual_rate,
                hours_per_year: c.hours_per_year,
            },
            ou: self.ou,
            supply: self.supply,
            theta: self.theta,
            epoch: self.g_tilde.epoch.format(TIMESTAMP_FORMAT).to_string(),
            calendar: self
                .g_tilde
                .calendar
                .to_text()
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_owned)
                .collect(),
            g_tilde: self.g_tilde.coefficients(),
            gamma3: self.gamma3.coefficients(),
        };
        let mut out = format!("# seasonality columns: {}\n", column_names().join(", "));
        out.push_str(&toml::to_string(&file).expect("model file serializes"));
        out
    }

    pub fn from_spec(spec: &SyntheticSpec) -> Self {
        Self {
            conv: spec.conv,
            ou: spec.ou,
            supply: spec.supply,
            theta: spec.theta.at(0),
            g_tilde: spec.g_tilde.clone(),
            gamma3: spec.gamma3.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).unwrap()
    }

    #[test]
    fn two_row_file() {
        let text = "timestamp,load,day_ahead,intraday\n2016-01-01T00:00:00,50.5,30,31.5\n2016-01-01T01:00:00,49,,\n";
        let s = MarketSeries::from_reader(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.day_ahead, vec![Some(30.0), None]);
        assert_eq!(s.price_coverage().unwrap().2, 1);
    }

    #[test]
    fn duplicate_timestamp_names_line() {
        let text = "timestamp,load,day_ahead,intraday\n2016-01-01T00:00:00,50,,\n2016-01-01T00:00:00,49,,\n";
        match MarketSeries::from_reader(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let head = "timestamp,load,day_ahead,intraday\n";
        for body in [
            "2016-01-01 00:00,50,,\n",
            "2016-01-01T00:00:00,,1,1\n",
            "2016-01-01T00:00:00,abc,1,1\n",
            "2016-01-01T00:00:00,50,x,1\n",
            "2016-01-01T01:00:00,50,,\n2016-01-01T00:00:00,50,,\n",
            "2016-01-01T00:00:00,50,,\n2016-01-01T02:00:00,50,,\n",
        ] {
            let r = MarketSeries::from_reader(format!("{head}{body}").as_bytes());
            assert!(matches!(r, Err(Error::Parse { .. })), "{body}: {r:?}");
        }
        assert!(MarketSeries::from_reader("timestamp,load\n".as_bytes()).is_err());
    }

    #[test]
    fn column_order_is_free() {
        let text = "intraday,timestamp,day_ahead,load\n1.5,2016-01-01T00:00:00,2.5,40\n";
        let s = MarketSeries::from_reader(text.as_bytes()).unwrap();
        assert_eq!(s.load, vec![40.0]);
        assert_eq!(s.intraday, vec![Some(1.5)]);
    }

    #[test]
    fn price_window_shorter_than_load() {
        // load from 2014-01-01, prices from 2015-06-28 to 2018-04-15
        let start = ts("2014-01-01T00:00:00");
        let p0 = ts("2015-06-28T00:00:00");
        let end = ts("2018-04-15T23:00:00");
        let n = ((end - start).num_hours() + 1) as usize;
        let timestamps: Vec<_> = (0..n).map(|k| start + Duration::hours(k as i64)).collect();
        let prices: Vec<Option<f64>> = timestamps.iter().map(|t| (*t >= p0).then_some(30.0)).collect();
        let s = MarketSeries::new(timestamps, vec![50.0; n], prices.clone(), prices).unwrap();
        let mut buf = Vec::new();
        s.to_writer(&mut buf).unwrap();
        let back = MarketSeries::from_reader(buf.as_slice()).unwrap();
        let (a, b, count) = back.price_coverage().unwrap();
        assert_eq!((a, b), (p0, end));
        assert_eq!(count, ((end - p0).num_hours() + 1) as usize);
    }

    #[test]
    fn generator_is_deterministic() {
        let mut spec = reference_spec(1, 7);
        spec.hours = 24 * 40;
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.to_writer(&mut buf_a).unwrap();
        b.to_writer(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.day_ahead[23], None);
        assert!(a.day_ahead[24].is_some());
        spec.seed = 8;
        assert_ne!(generate_synthetic(&spec).unwrap(), a);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut spec = reference_spec(1, 3);
        spec.hours = 24 * 35;
        let s = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        s.to_writer(&mut buf).unwrap();
        assert_eq!(MarketSeries::from_reader(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn model_file_round_trip() {
        let spec = reference_spec(1, 1);
        let p = ModelParams::from_spec(&spec);
        let text = p.to_toml();
        let q = ModelParams::from_toml(&text).unwrap();
        assert_eq!(q.to_toml(), text);
        assert_eq!(q.g_tilde.coefficients(), p.g_tilde.coefficients());
        assert_eq!(q.calendar().len(), p.calendar().len());
        assert!(ModelParams::from_toml("theta = 1").is_err());
    }

    #[test]
    fn monthly_schedule_cycles() {
        let s = ThetaSchedule::Monthly(vec![-0.03, 0.0, 0.01]);
        assert_eq!(s.at(4), 0.0);
        assert_eq!(month_index(ts("2015-01-31T23:00:00"), ts("2016-02-01T00:00:00")), 13);
    }
}
