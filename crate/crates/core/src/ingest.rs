//! Station records: loading, daily averages, gap filling and summary
//! statistics.
//!
//! A station file is a CSV with header `date,tmax,tmin` (an optional `tavg`
//! column is accepted and written back out). Dates are ISO-8601 calendar
//! days, an empty field marks a missing reading, and absent dates inside the
//! covered range become missing days.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest fraction of missing days that [`fill_missing`] will repair.
pub const MAX_MISSING_FRACTION: f64 = 0.10;

/// The date `i` days after `start`.
pub fn nth_day(start: NaiveDate, i: usize) -> NaiveDate {
    start + chrono::Days::new(i as u64)
}

/// One row of a station file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub tmax: Option<f64>,
    pub tmin: Option<f64>,
}

/// Daily series for one station at daily spacing.
///
/// `values` holds the daily average temperature (°C); `None` marks a missing
/// day. The raw extremes are kept alongside so the series can be written
/// back in the input schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSeries {
    pub station_id: String,
    pub start_date: NaiveDate,
    pub tmax: Vec<Option<f64>>,
    pub tmin: Vec<Option<f64>>,
    pub values: Vec<Option<f64>>,
}

impl TemperatureSeries {
    /// Build a series from complete daily averages.
    pub fn from_values(station_id: impl Into<String>, start_date: NaiveDate, values: &[f64]) -> Self {
        Self {
            station_id: station_id.into(),
            start_date,
            tmax: vec![None; values.len()],
            tmin: vec![None; values.len()],
            values: values.iter().copied().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.len().saturating_sub(1))
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.missing_count() as f64 / self.len() as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// The daily averages, or an error naming the first missing date.
    pub fn complete_values(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Validation(format!("missing value at {}", self.date(i)))))
            .collect()
    }

    fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }
}

/// Daily average temperature from the daily extremes.
///
/// A missing extreme gives a missing average; `tmax < tmin` is rejected.
pub fn daily_average(tmax: Option<f64>, tmin: Option<f64>) -> Result<Option<f64>> {
    match (tmax, tmin) {
        (Some(hi), Some(lo)) => {
            if !(hi.is_finite() && lo.is_finite()) {
                return Err(Error::Validation(format!("non-finite temperature ({hi}, {lo})")));
            }
            if hi < lo {
                return Err(Error::Validation(format!("tmax {hi} is below tmin {lo}")));
            }
            Ok(Some((hi + lo) / 2.0))
        }
        _ => Ok(None),
    }
}

/// Options for [`load_station_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Station label; defaults to the file stem.
    pub station_id: Option<String>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            station_id: None,
            delimiter: b',',
        }
    }
}

/// Load a station file from disk.
pub fn load_station_csv(path: &Path, options: &CsvOptions) -> Result<TemperatureSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut opts = options.clone();
    if opts.station_id.is_none() {
        opts.station_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    parse_station_csv(file, &opts)
}

/// Parse station CSV text from any reader.
pub fn parse_station_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<TemperatureSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(c_date), Some(c_max), Some(c_min)) = (column("date"), column("tmax"), column("tmin")) else {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must contain date,tmax,tmin (found `{}`)", headers.iter().collect::<Vec<_>>().join(",")),
        });
    };
    let c_avg = column("tavg");

    let mut rows: Vec<(NaiveDate, Option<f64>, Option<f64>, Option<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: usize| record.get(c).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{}`: {e}", field(c_date)),
        })?;
        let number = |c: usize, what: &str| -> Result<Option<f64>> {
            let s = field(c);
            if s.is_empty() {
                return Ok(None);
            }
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(Error::Parse {
                    line,
                    message: format!("bad {what} `{s}`"),
                }),
            }
        };
        let tmax = number(c_max, "tmax")?;
        let tmin = number(c_min, "tmin")?;
        let tavg = match c_avg {
            Some(c) => number(c, "tavg")?,
            None => None,
        };
        let computed = daily_average(tmax, tmin).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some((prev, ..)) = rows.last() {
            if date == *prev {
                return Err(Error::DuplicateDate(date));
            }
            if date < *prev {
                return Err(Error::NonMonotoneDates {
                    line,
                    date,
                    previous: *prev,
                });
            }
        }
        rows.push((date, tmax, tmin, computed.or(tavg)));
    }
    let Some(&(start_date, ..)) = rows.first() else {
        return Err(Error::Validation("station file has no data rows".into()));
    };
    let end = rows.last().map(|r| r.0).unwrap_or(start_date);
    let n = (end - start_date).num_days() as usize + 1;
    let mut series = TemperatureSeries {
        station_id: options.station_id.clone().unwrap_or_else(|| "station".into()),
        start_date,
        tmax: vec![None; n],
        tmin: vec![None; n],
        values: vec![None; n],
    };
    for (date, tmax, tmin, tavg) in rows {
        let i = (date - start_date).num_days() as usize;
        series.tmax[i] = tmax;
        series.tmin[i] = tmin;
        series.values[i] = tavg;
    }
    Ok(series)
}

/// Render a series in the output schema `date,tmax,tmin,tavg`.
pub fn station_csv_string(series: &TemperatureSeries) -> String {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("date,tmax,tmin,tavg\n");
    for i in 0..series.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            series.date(i).format("%Y-%m-%d"),
            fmt(series.tmax[i]),
            fmt(series.tmin[i]),
            fmt(series.values[i])
        ));
    }
    out
}

/// Write a series to disk in the output schema.
pub fn write_station_csv(series: &TemperatureSeries, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, station_csv_string(series).as_bytes())
}

/// Fill missing days by the combined-average rule.
///
/// Each missing day becomes the mean of two averages: the `window_days`
/// days on either side of it, and the same calendar day in every earlier
/// year of the record (Feb 28 stands in for Feb 29). Days are processed in
/// date order, so a value filled earlier is available to later gaps;
/// neighbours that are still missing are skipped. Present values are never
/// modified.
pub fn fill_missing(series: &TemperatureSeries, window_days: usize) -> Result<TemperatureSeries> {
    let fraction = series.missing_fraction();
    if fraction > MAX_MISSING_FRACTION {
        return Err(Error::TooManyMissing {
            fraction,
            limit: MAX_MISSING_FRACTION,
        });
    }
    if window_days == 0 {
        return Err(Error::Validation("window_days must be at least 1".into()));
    }
    let n = series.len();
    let mut out = series.clone();
    for i in 0..n {
        if series.values[i].is_some() {
            continue;
        }
        let date = series.date(i);
        if i < window_days || i + window_days >= n {
            return Err(Error::GapFill {
                date,
                reason: format!("fewer than {window_days} days on one side of the gap"),
            });
        }
        let neighbours: Vec<f64> = (1..=window_days)
            .flat_map(|d| [out.values[i - d], out.values[i + d]])
            .flatten()
            .collect();
        if neighbours.is_empty() {
            return Err(Error::GapFill {
                date,
                reason: "no available neighbouring days".into(),
            });
        }
        let day_avg = neighbours.iter().sum::<f64>() / neighbours.len() as f64;

        let prior: Vec<f64> = (1..)
            .map(|back| same_day_in_year(date, date.year() - back))
            .take_while(|d| *d >= series.start_date)
            .filter_map(|d| out.index_of(d).and_then(|j| out.values[j]))
            .collect();
        if prior.is_empty() {
            return Err(Error::GapFill {
                date,
                reason: "no earlier year observes this calendar day".into(),
            });
        }
        let year_avg = prior.iter().sum::<f64>() / prior.len() as f64;
        out.values[i] = Some(0.5 * (day_avg + year_avg));
    }
    Ok(out)
}

fn same_day_in_year(date: NaiveDate, year: i32) -> NaiveDate {
    let (month, day) = if date.month() == 2 && date.day() == 29 {
        (2, 28)
    } else {
        (date.month(), date.day())
    };
    NaiveDate::from_ymd_opt(year, month, day)
        .or_else(|| NaiveDate::from_ymd_opt(year, month, 28))
        .expect("day 28 exists in every month")
}

/// Summary statistics of a complete series.
///
/// `std` is the sample standard deviation (n-1). Skewness is the standardised
/// third central moment and kurtosis the raw fourth (3 for a normal); both
/// are `None` for a constant series. The mode is taken over values rounded
/// to 0.1 °C, ties going to the smallest value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

pub fn descriptive_stats(values: &[f64]) -> Result<DescriptiveStats> {
    if values.is_empty() {
        return Err(Error::Validation("descriptive statistics of an empty series".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("series contains non-finite values".into()));
    }
    let n = values.len();
    let nf = n as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = if n > 1 { (m2 * nf / (nf - 1.0)).sqrt() } else { 0.0 };
    let (skewness, kurtosis) = if m2 > 0.0 && m2 > 1e-28 * mean * mean {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry((v * 10.0).round() as i64).or_default() += 1;
    }
    // BTreeMap iterates keys ascending, so the first maximum is the smallest.
    let mut best = (i64::MIN, 0usize);
    for (&k, &c) in &counts {
        if c > best.1 {
            best = (k, c);
        }
    }
    Ok(DescriptiveStats {
        n,
        mean,
        median,
        mode: best.0 as f64 / 10.0,
        std,
        min: sorted[0],
        max: sorted[n - 1],
        skewness,
        kurtosis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn parse(text: &str) -> Result<TemperatureSeries> {
        parse_station_csv(text.as_bytes(), &CsvOptions::default())
    }

    #[test]
    fn daily_average_examples() {
        assert_eq!(daily_average(Some(30.0), Some(20.0)).unwrap(), Some(25.0));
        assert_eq!(daily_average(Some(17.3), Some(17.3)).unwrap(), Some(17.3));
        assert_eq!(daily_average(None, Some(20.0)).unwrap(), None);
        assert_eq!(daily_average(Some(20.0), None).unwrap(), None);
        assert!(daily_average(Some(10.0), Some(20.0)).is_err());
    }

    #[test]
    fn daily_average_matches_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-40.0..50.0);
            let b: f64 = rng.random_range(-40.0..50.0);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let oracle = [hi, lo].iter().sum::<f64>() / 2.0;
            assert_eq!(daily_average(Some(hi), Some(lo)).unwrap(), Some(oracle));
        }
    }

    #[test]
    fn daily_average_translates() {
        let base = daily_average(Some(31.5), Some(18.25)).unwrap().unwrap();
        let shifted = daily_average(Some(31.5 + 4.0), Some(18.25 + 4.0)).unwrap().unwrap();
        assert!((shifted - (base + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn loads_three_rows() {
        let s = parse("date,tmax,tmin\n2020-01-01,30,20\n2020-01-02,31,21\n2020-01-03,32,22\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values, vec![Some(25.0), Some(26.0), Some(27.0)]);
        assert_eq!(s.start_date, d("2020-01-01"));
    }

    #[test]
    fn absent_date_becomes_missing() {
        let s = parse("date,tmax,tmin\n2020-01-01,30,20\n2020-01-03,32,22\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.missing_count(), 1);
        assert_eq!(s.values[1], None);
    }

    #[test]
    fn empty_field_is_missing() {
        let s = parse("date,tmax,tmin\n2020-01-01,30,\n2020-01-02,31,21\n").unwrap();
        assert_eq!(s.values, vec![None, Some(26.0)]);
    }

    #[test]
    fn duplicate_date_names_the_date() {
        let err = parse("date,tmax,tmin\n2020-01-01,30,20\n2020-01-01,31,21\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateDate(dt) if dt == d("2020-01-01")));
        assert!(err.to_string().contains("2020-01-01"));
    }

    #[test]
    fn decreasing_dates_rejected() {
        let err = parse("date,tmax,tmin\n2020-01-02,30,20\n2020-01-01,31,21\n").unwrap_err();
        assert!(matches!(err, Error::NonMonotoneDates { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("date,tmax,tmin\n2020-01-01,30,20\n2020-01-02,abc,21\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("date,tmax,tmin\n2020-13-01,30,20\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("date,tmax,tmin\n2020-01-01,20,30\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn round_trip_is_fixed_point() {
        let text = "date,tmax,tmin\n2020-01-01,30.1,20.7\n2020-01-03,32,22\n2020-01-04,,22\n";
        let first = parse(text).unwrap();
        let again = parse(&station_csv_string(&first)).unwrap();
        assert_eq!(first, again);
        let filled_like = TemperatureSeries::from_values("x", d("2021-05-05"), &[1.0 / 3.0, 2.5, -0.1]);
        assert_eq!(parse(&station_csv_string(&filled_like)).unwrap().values, filled_like.values);
    }

    /// Two years of daily values with a hole at `hole`.
    fn with_hole(c_days: f64, c_prior: f64, hole: usize) -> TemperatureSeries {
        let start = d("2019-01-01");
        let n = 365 + 60;
        let mut vals: Vec<Option<f64>> = (0..n).map(|i| Some(if i < 365 { c_prior } else { c_days })).collect();
        vals[hole] = None;
        TemperatureSeries {
            station_id: "t".into(),
            start_date: start,
            tmax: vec![None; n],
            tmin: vec![None; n],
            values: vals,
        }
    }

    #[test]
    fn fill_constant_series() {
        let s = with_hole(12.5, 12.5, 380);
        let f = fill_missing(&s, 7).unwrap();
        assert_eq!(f.values[380], Some(12.5));
        assert!(f.is_complete());
    }

    #[test]
    fn fill_combines_the_two_averages() {
        // neighbours average 10, the same day one year earlier is 20
        let s = with_hole(10.0, 20.0, 380);
        let f = fill_missing(&s, 7).unwrap();
        assert_eq!(f.values[380], Some(15.0));
    }

    #[test]
    fn fill_refuses_heavy_missingness() {
        let n = 400;
        let mut s = TemperatureSeries::from_values("t", d("2019-01-01"), &vec![1.0; n]);
        for i in (0..n).step_by(6).take(60) {
            s.values[i] = None;
        }
        assert!((s.missing_fraction() - 0.15).abs() < 1e-12);
        assert!(matches!(fill_missing(&s, 7), Err(Error::TooManyMissing { .. })));
    }

    #[test]
    fn fill_boundary_gap_names_date() {
        let mut s = TemperatureSeries::from_values("t", d("2019-01-01"), &vec![1.0; 800]);
        s.values[3] = None;
        match fill_missing(&s, 7) {
            Err(Error::GapFill { date, .. }) => assert_eq!(date, d("2019-01-04")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fill_first_year_gap_has_no_prior_year() {
        let mut s = TemperatureSeries::from_values("t", d("2019-01-01"), &vec![1.0; 800]);
        s.values[100] = None;
        assert!(matches!(fill_missing(&s, 7), Err(Error::GapFill { .. })));
    }

    #[test]
    fn fill_consecutive_gap_uses_earlier_fills() {
        let mut s = with_hole(10.0, 20.0, 380);
        s.values[381] = None;
        let f = fill_missing(&s, 7).unwrap();
        assert_eq!(f.values[380], Some(15.0));
        // neighbours: 13 originals at 10 plus the filled 15
        let day = (13.0 * 10.0 + 15.0) / 14.0;
        assert_eq!(f.values[381], Some(0.5 * (day + 20.0)));
    }

    #[test]
    fn leap_day_uses_feb_28() {
        // 2019-01-01 .. 2020-04-30; 2020-02-29 is missing
        let start = d("2019-01-01");
        let n = (d("2020-04-30") - start).num_days() as usize + 1;
        let mut vals = vec![Some(5.0); n];
        let feb28_2019 = (d("2019-02-28") - start).num_days() as usize;
        vals[feb28_2019] = Some(9.0);
        let hole = (d("2020-02-29") - start).num_days() as usize;
        vals[hole] = None;
        let s = TemperatureSeries {
            station_id: "t".into(),
            start_date: start,
            tmax: vec![None; n],
            tmin: vec![None; n],
            values: vals,
        };
        let f = fill_missing(&s, 7).unwrap();
        assert_eq!(f.values[hole], Some(0.5 * (5.0 + 9.0)));
    }

    #[test]
    fn fill_is_idempotent_on_complete_series() {
        let s = TemperatureSeries::from_values("t", d("2019-01-01"), &[1.0, 2.0, 3.0]);
        assert_eq!(fill_missing(&s, 7).unwrap(), s);
    }

    #[test]
    fn stats_of_constant_series() {
        let st = descriptive_stats(&[4.2; 50]).unwrap();
        assert_eq!((st.mean, st.median, st.mode, st.min, st.max), (4.2, 4.2, 4.2, 4.2, 4.2));
        assert!(st.std.abs() < 1e-12);
        assert_eq!(st.skewness, None);
    }

    #[test]
    fn stats_symmetric_two_point() {
        let v: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let st = descriptive_stats(&v).unwrap();
        assert_eq!(st.skewness, Some(0.0));
        assert_eq!(st.kurtosis, Some(1.0));
        assert_eq!(st.mode, -1.0);
        assert_eq!(st.median, 0.0);
    }

    #[test]
    fn stats_of_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..10_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let st = descriptive_stats(&v).unwrap();
        // four standard errors: sqrt(6/n) and sqrt(24/n)
        assert!(st.skewness.unwrap().abs() < 4.0 * (6.0f64 / 1e4).sqrt());
        assert!((st.kurtosis.unwrap() - 3.0).abs() < 4.0 * (24.0f64 / 1e4).sqrt());
    }

    #[test]
    fn stats_empty_rejected() {
        assert!(descriptive_stats(&[]).is_err());
    }
}
