//! Historical rate series and horizon-length rate trajectories.
//!
//! Series files are CSV with a `date` (`YYYY-MM`) and a `value` column. A
//! sidecar JSON [`SeriesDescriptor`] says whether `value` is an annual rate
//! or an index level; index levels are turned into annual rates by the
//! declared transform. Trajectories hold *monthly* rates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{monthly_rate, PlanConfig, RateMap};

/// Calendar month.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(n: i64) -> Self {
        Self {
            year: n.div_euclid(12) as i32,
            month: n.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Months from `self` to `later`.
    pub fn months_until(self, later: YearMonth) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        Self::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    AnnualRate,
    IndexLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `L_t / L_{t-12} - 1`
    YearOverYear,
    /// `(L_t / L_{t-1})^12 - 1`
    MonthOverMonthAnnualized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Decimal,
    Percent,
}

/// Sidecar description of a series CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDescriptor {
    pub id: String,
    pub value_kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub source: String,
}

impl SeriesDescriptor {
    pub fn annual_rate(id: &str) -> Self {
        Self {
            id: id.into(),
            value_kind: ValueKind::AnnualRate,
            transform: None,
            units: Units::Decimal,
            source: String::new(),
        }
    }
}

/// Monthly observations of an annual rate (decimal).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub id: String,
    pub source: String,
    pub observations: Vec<(YearMonth, f64)>,
}

impl RateSeries {
    pub fn first_month(&self) -> Option<YearMonth> {
        self.observations.first().map(|o| o.0)
    }

    pub fn last_month(&self) -> Option<YearMonth> {
        self.observations.last().map(|o| o.0)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Annual rate at `month`, if covered.
    pub fn get(&self, month: YearMonth) -> Option<f64> {
        let first = self.first_month()?;
        let k = first.months_until(month);
        if k < 0 {
            return None;
        }
        self.observations.get(k as usize).map(|o| o.1)
    }

    /// `date,value` CSV of the annual rates.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (m, v) in &self.observations {
            out.push_str(&format!("{m},{v}\n"));
        }
        out
    }
}

/// Loads a series CSV and applies its descriptor.
pub fn load_series(path: impl AsRef<Path>, descriptor: &SeriesDescriptor) -> Result<RateSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text, descriptor)
}

/// Loads `<stem>.csv` using the descriptor in `<stem>.json`.
pub fn load_series_pair(json_path: impl AsRef<Path>) -> Result<RateSeries> {
    let json_path = json_path.as_ref();
    let descriptor: SeriesDescriptor = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    load_series(json_path.with_extension("csv"), &descriptor)
}

/// Every descriptor/CSV pair in `dir`, sorted by series id.
pub fn load_series_dir(dir: impl AsRef<Path>) -> Result<Vec<RateSeries>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(load_series_pair(&path)?);
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

pub fn parse_series(text: &str, descriptor: &SeriesDescriptor) -> Result<RateSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing `{name}` column"),
            })
    };
    let (date_col, value_col) = (col("date")?, col("value")?);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let month: YearMonth = field(date_col).parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let value: f64 = field(value_col).parse().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a number", field(value_col)),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: "value must be finite".into(),
            });
        }
        rows.push((month, value));
    }
    rows.sort_by_key(|r| r.0);
    for pair in rows.windows(2) {
        let gap = pair[0].0.months_until(pair[1].0);
        if gap == 0 {
            return Err(Error::Validation(format!(
                "{}: duplicate month {}",
                descriptor.id, pair[0].0
            )));
        }
        if gap > 1 {
            return Err(Error::Validation(format!(
                "{}: missing month {}",
                descriptor.id,
                pair[0].0.offset(1)
            )));
        }
    }

    let scale = match descriptor.units {
        Units::Decimal => 1.0,
        Units::Percent => 0.01,
    };
    let observations = match (descriptor.value_kind, descriptor.transform) {
        (ValueKind::AnnualRate, None) => rows.into_iter().map(|(m, v)| (m, v * scale)).collect(),
        (ValueKind::AnnualRate, Some(_)) => {
            return Err(Error::Validation(format!(
                "{}: annual rates take no transform",
                descriptor.id
            )))
        }
        (ValueKind::IndexLevel, None) => {
            return Err(Error::Validation(format!(
                "{}: index levels need a transform",
                descriptor.id
            )))
        }
        (ValueKind::IndexLevel, Some(t)) => {
            if let Some((m, v)) = rows.iter().find(|r| r.1 <= 0.0) {
                return Err(Error::Validation(format!(
                    "{}: non-positive level {v} at {m}",
                    descriptor.id
                )));
            }
            let lag = match t {
                Transform::YearOverYear => 12,
                Transform::MonthOverMonthAnnualized => 1,
            };
            rows.iter()
                .skip(lag)
                .zip(&rows)
                .map(|((m, now), (_, before))| {
                    let ratio = now / before;
                    let annual = match t {
                        Transform::YearOverYear => ratio - 1.0,
                        Transform::MonthOverMonthAnnualized => ratio.powi(12) - 1.0,
                    };
                    (*m, annual)
                })
                .collect()
        }
    };
    Ok(RateSeries {
        id: descriptor.id.clone(),
        source: descriptor.source.clone(),
        observations,
    })
}

const BUNDLED: [(&str, &str); 3] = [
    (
        include_str!("../data/rates/cpi.json"),
        include_str!("../data/rates/cpi.csv"),
    ),
    (
        include_str!("../data/rates/sp500.json"),
        include_str!("../data/rates/sp500.csv"),
    ),
    (
        include_str!("../data/rates/tbill.json"),
        include_str!("../data/rates/tbill.csv"),
    ),
];

/// The CPI, S&P 500 and T-bill series shipped with the crate, sorted by id.
pub fn bundled_series() -> Vec<RateSeries> {
    BUNDLED
        .iter()
        .map(|(desc, csv)| {
            let d: SeriesDescriptor =
                serde_json::from_str(desc).expect("bundled descriptor parses");
            parse_series(csv, &d).expect("bundled series parses")
        })
        .collect()
}

/// Aligned monthly rates for months `0..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTrajectory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<YearMonth>,
    pub rates: BTreeMap<String, Vec<f64>>,
}

impl RateTrajectory {
    /// Number of months covered, `T + 1`.
    pub fn len(&self) -> usize {
        self.rates.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rates.get(id).map(Vec::as_slice)
    }

    pub fn at(&self, month: usize) -> RateMap {
        self.rates
            .iter()
            .map(|(k, v)| (k.clone(), v[month]))
            .collect()
    }

    /// Checks that the trajectory covers months `0..=horizon` for every rate
    /// the plan references.
    pub fn check_covers(&self, plan: &PlanConfig, horizon: usize) -> Result<()> {
        for id in plan.rate_ids() {
            match self.rates.get(&id) {
                None => return Err(Error::Data(format!("trajectory has no rate `{id}`"))),
                Some(v) if v.len() < horizon + 1 => {
                    return Err(Error::Data(format!(
                        "rate `{id}` covers {} months, horizon needs {}",
                        v.len(),
                        horizon + 1
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Adds constant-source rates the plan references but this trajectory
    /// lacks, at the trajectory's length.
    pub fn with_plan_constants(mut self, plan: &PlanConfig) -> Result<Self> {
        let len = self.len().max(plan.horizon_months + 1);
        for id in plan.rate_ids() {
            if self.rates.contains_key(&id) {
                continue;
            }
            let source = plan.rate_source_for(&id).expect("id from plan");
            if source.is_series() {
                return Err(Error::Data(format!("trajectory has no series `{id}`")));
            }
            self.rates
                .insert(id.clone(), vec![plan.constant_monthly_rate(&id)?; len]);
        }
        Ok(self)
    }
}

/// Each constant rate repeated for months `0..=horizon`.
pub fn constant_trajectory(config: &PlanConfig, horizon: usize) -> Result<RateTrajectory> {
    let rates = config
        .rate_ids()
        .into_iter()
        .map(|id| {
            let r = config.constant_monthly_rate(&id)?;
            Ok((id, vec![r; horizon + 1]))
        })
        .collect::<Result<_>>()?;
    Ok(RateTrajectory { start: None, rates })
}

/// First and last month covered by every series.
pub fn common_coverage(series: &[RateSeries]) -> Result<(YearMonth, YearMonth)> {
    let mut first = None::<YearMonth>;
    let mut last = None::<YearMonth>;
    for s in series {
        let (a, b) = s
            .first_month()
            .zip(s.last_month())
            .ok_or_else(|| Error::Data(format!("series `{}` is empty", s.id)))?;
        first = Some(first.map_or(a, |f| f.max(a)));
        last = Some(last.map_or(b, |l| l.min(b)));
    }
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b)),
        (Some(_), Some(_)) => Err(Error::Data("series do not overlap".into())),
        _ => Err(Error::Data("no series given".into())),
    }
}

/// Window of `horizon + 1` months starting at `start`, converted to monthly rates.
pub fn window_at(
    series: &[RateSeries],
    start: YearMonth,
    horizon: usize,
) -> Result<RateTrajectory> {
    let mut rates = BTreeMap::new();
    for s in series {
        let v = (0..=horizon)
            .map(|k| {
                let m = start.offset(k as i64);
                let annual = s
                    .get(m)
                    .ok_or_else(|| Error::Data(format!("series `{}` does not cover {m}", s.id)))?;
                monthly_rate(annual)
            })
            .collect::<Result<Vec<_>>>()?;
        rates.insert(s.id.clone(), v);
    }
    Ok(RateTrajectory {
        start: Some(start),
        rates,
    })
}

/// Number of distinct window starts within the common coverage.
fn window_span(series: &[RateSeries], horizon: usize) -> Result<(YearMonth, i64)> {
    let (first, last) = common_coverage(series)?;
    let months = first.months_until(last) + 1;
    let starts = months - horizon as i64;
    if starts < 1 {
        return Err(Error::Data(format!(
            "common coverage {first}..{last} has {months} months, a {horizon}-month horizon needs {}",
            horizon + 1
        )));
    }
    Ok((first, starts))
}

/// `count` windows with uniformly random start months over the common
/// coverage. All series in one window share the start month.
pub fn sample_windows(
    series: &[RateSeries],
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<RateTrajectory>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let (first, starts) = window_span(series, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| window_at(series, first.offset(rng.gen_range(0..starts)), horizon))
        .collect()
}

/// Every overlapping window in the common coverage, in start order.
pub fn all_windows(series: &[RateSeries], horizon: usize) -> Result<Vec<RateTrajectory>> {
    let (first, starts) = window_span(series, horizon)?;
    (0..starts)
        .map(|k| window_at(series, first.offset(k), horizon))
        .collect()
}
