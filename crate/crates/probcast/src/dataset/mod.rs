//! Data model for univariate time series collections.
//!
//! A dataset is a stream of [`TimeSeriesRecord`]s. Records come either from
//! jsonlines files ([`read_jsonlines`]) or from the declarative synthetic
//! generator ([`generate_synthetic`]). All readers are lazy: a file of any
//! size is consumed one record at a time.

mod jsonl;
mod synthetic;

pub use jsonl::{read_jsonlines, read_jsonlines_from, write_jsonlines, JsonlDataset};
pub use synthetic::{generate_synthetic, NoiseSpec, SynthSpec};

use chrono::{Datelike, Duration, Months, NaiveDate, Timelike};
pub use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Base time unit of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreqUnit {
    Minute,
    Hour,
    Day,
    Week,
    Month,
    Quarter,
    Year,
}

/// Sampling frequency: a unit plus a positive multiple (`2H`, `15min`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frequency {
    unit: FreqUnit,
    multiple: u32,
}

impl Frequency {
    pub fn new(unit: FreqUnit, multiple: u32) -> Result<Self> {
        if multiple == 0 {
            return Err(Error::validation("frequency multiple must be >= 1"));
        }
        Ok(Frequency { unit, multiple })
    }

    pub fn unit(&self) -> FreqUnit {
        self.unit
    }

    pub fn multiple(&self) -> u32 {
        self.multiple
    }

    /// Default season length used by seasonal-naive style baselines and MASE.
    /// Minute data gets the hourly cycle (60), not the daily one.
    pub fn season_length(&self) -> usize {
        match self.unit {
            FreqUnit::Minute => 60,
            FreqUnit::Hour => 24,
            FreqUnit::Day => 7,
            FreqUnit::Week => 52,
            FreqUnit::Month => 12,
            FreqUnit::Quarter => 4,
            FreqUnit::Year => 1,
        }
    }

    /// Parse a pandas-style frequency token: optional multiple followed by
    /// one of `min`/`T`, `H`, `D`, `W`, `M`, `Q`, `Y`/`A`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let digits_end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (num, unit_str) = s.split_at(digits_end);
        let multiple: u32 = if num.is_empty() {
            1
        } else {
            num.parse().map_err(|_| Error::validation(format!("invalid frequency multiple in '{s}'")))?
        };
        let unit = match unit_str {
            "min" | "T" | "t" => FreqUnit::Minute,
            "H" | "h" => FreqUnit::Hour,
            "D" | "d" => FreqUnit::Day,
            "W" | "w" => FreqUnit::Week,
            "M" => FreqUnit::Month,
            "Q" | "q" => FreqUnit::Quarter,
            "Y" | "y" | "A" | "a" => FreqUnit::Year,
            other => return Err(Error::validation(format!("unknown frequency unit '{other}' in '{s}'"))),
        };
        Frequency::new(unit, multiple)
    }

    /// Canonical token accepted back by [`Frequency::parse`].
    pub fn to_token(&self) -> String {
        let unit = match self.unit {
            FreqUnit::Minute => "min",
            FreqUnit::Hour => "H",
            FreqUnit::Day => "D",
            FreqUnit::Week => "W",
            FreqUnit::Month => "M",
            FreqUnit::Quarter => "Q",
            FreqUnit::Year => "Y",
        };
        if self.multiple == 1 {
            unit.to_string()
        } else {
            format!("{}{}", self.multiple, unit)
        }
    }

    /// Timestamp `steps` grid steps after `start`.
    pub fn add_steps(&self, start: NaiveDateTime, steps: i64) -> Result<NaiveDateTime> {
        let n = steps
            .checked_mul(i64::from(self.multiple))
            .ok_or_else(|| Error::validation("timestamp arithmetic overflow"))?;
        let out = match self.unit {
            FreqUnit::Minute => start.checked_add_signed(Duration::minutes(n)),
            FreqUnit::Hour => start.checked_add_signed(Duration::hours(n)),
            FreqUnit::Day => start.checked_add_signed(Duration::days(n)),
            FreqUnit::Week => start.checked_add_signed(Duration::weeks(n)),
            FreqUnit::Month => add_months(start, n),
            FreqUnit::Quarter => n.checked_mul(3).and_then(|m| add_months(start, m)),
            FreqUnit::Year => n.checked_mul(12).and_then(|m| add_months(start, m)),
        };
        out.ok_or_else(|| Error::validation("timestamp arithmetic overflow"))
    }

    /// Truncate a timestamp down to this frequency's grid. Weeks snap to
    /// Monday, quarters to the first month of the quarter.
    pub fn truncate(&self, ts: NaiveDateTime) -> NaiveDateTime {
        let date = ts.date();
        match self.unit {
            FreqUnit::Minute => ts.with_second(0).unwrap().with_nanosecond(0).unwrap(),
            FreqUnit::Hour => ts
                .with_minute(0)
                .unwrap()
                .with_second(0)
                .unwrap()
                .with_nanosecond(0)
                .unwrap(),
            FreqUnit::Day => date.and_hms_opt(0, 0, 0).unwrap(),
            FreqUnit::Week => {
                let back = i64::from(date.weekday().num_days_from_monday());
                (date - Duration::days(back)).and_hms_opt(0, 0, 0).unwrap()
            }
            FreqUnit::Month => NaiveDate::from_ymd_opt(date.year(), date.month(), 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            FreqUnit::Quarter => {
                let month = (date.month0() / 3) * 3 + 1;
                NaiveDate::from_ymd_opt(date.year(), month, 1)
                    .unwrap()
                    .and_hms_opt(0, 0, 0)
                    .unwrap()
            }
            FreqUnit::Year => NaiveDate::from_ymd_opt(date.year(), 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
        }
    }
}

fn add_months(start: NaiveDateTime, n: i64) -> Option<NaiveDateTime> {
    let months = u32::try_from(n.unsigned_abs()).ok()?;
    if n >= 0 {
        start.checked_add_months(Months::new(months))
    } else {
        start.checked_sub_months(Months::new(months))
    }
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    if let Ok(ts) = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT) {
        return Ok(ts);
    }
    // Date-only form is common in public daily/monthly datasets.
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap())
        .map_err(|_| Error::validation(format!("invalid timestamp '{s}' (expected YYYY-MM-DD HH:MM:SS)")))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// One univariate series with optional covariates.
///
/// The target may contain missing observations (`None`); every dynamic
/// feature is fully observed and at least as long as the target (it may
/// extend past it to cover a forecast horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub item_id: String,
    pub start: NaiveDateTime,
    pub freq: Frequency,
    pub target: Vec<Option<f64>>,
    pub feat_dynamic_real: Vec<Vec<f64>>,
    pub feat_static_cat: Vec<u64>,
}

impl TimeSeriesRecord {
    pub fn new(
        item_id: impl Into<String>,
        start: NaiveDateTime,
        freq: Frequency,
        target: Vec<Option<f64>>,
        feat_dynamic_real: Vec<Vec<f64>>,
        feat_static_cat: Vec<u64>,
    ) -> Result<Self> {
        let record = TimeSeriesRecord {
            item_id: item_id.into(),
            start,
            freq,
            target,
            feat_dynamic_real,
            feat_static_cat,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::validation(format!("record '{}': target must be non-empty", self.item_id)));
        }
        for (i, feat) in self.feat_dynamic_real.iter().enumerate() {
            if feat.len() < self.target.len() {
                return Err(Error::validation(format!(
                    "record '{}': dynamic feature {} has length {} < target length {}",
                    self.item_id,
                    i,
                    feat.len(),
                    self.target.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Timestamp of step `t` (0-based).
    pub fn timestamp_at(&self, t: usize) -> Result<NaiveDateTime> {
        self.freq.add_steps(self.start, t as i64)
    }

    /// First timestamp after the last target value.
    pub fn end_timestamp(&self) -> Result<NaiveDateTime> {
        self.timestamp_at(self.target.len())
    }

    /// Observed (non-missing) target values, in order.
    pub fn observed_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.target.iter().filter_map(|v| *v)
    }

    /// Align `start` down to the frequency grid, warning when it moves.
    pub fn align_start(&mut self) {
        let truncated = self.freq.truncate(self.start);
        if truncated != self.start {
            log::warn!(
                "record '{}': start {} not aligned to {} grid, truncated to {}",
                self.item_id,
                format_timestamp(self.start),
                self.freq.to_token(),
                format_timestamp(truncated)
            );
            self.start = truncated;
        }
    }
}

/// A dataset that can be iterated multiple times (backtests need two passes
/// for global models: one to train, one to evaluate).
pub trait Dataset {
    fn iter(&self) -> Result<Box<dyn Iterator<Item = Result<TimeSeriesRecord>> + Send + '_>>;
}

/// In-memory dataset, mostly for tests and small experiments.
#[derive(Debug, Clone, Default)]
pub struct InMemoryDataset {
    pub records: Vec<TimeSeriesRecord>,
}

impl InMemoryDataset {
    pub fn new(records: Vec<TimeSeriesRecord>) -> Self {
        InMemoryDataset { records }
    }
}

impl Dataset for InMemoryDataset {
    fn iter(&self) -> Result<Box<dyn Iterator<Item = Result<TimeSeriesRecord>> + Send + '_>> {
        Ok(Box::new(self.records.iter().cloned().map(Ok)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn frequency_tokens_round_trip() {
        for token in ["min", "15min", "H", "2H", "D", "W", "M", "Q", "Y"] {
            let f = Frequency::parse(token).unwrap();
            assert_eq!(f.to_token(), token);
            assert_eq!(Frequency::parse(&f.to_token()).unwrap(), f);
        }
        assert_eq!(Frequency::parse("T").unwrap().unit(), FreqUnit::Minute);
        assert_eq!(Frequency::parse("A").unwrap().unit(), FreqUnit::Year);
        assert!(Frequency::parse("0D").is_err());
        assert!(Frequency::parse("fortnight").is_err());
    }

    #[test]
    fn default_season_lengths() {
        let cases = [
            ("min", 60),
            ("H", 24),
            ("D", 7),
            ("W", 52),
            ("M", 12),
            ("Q", 4),
            ("Y", 1),
        ];
        for (token, expected) in cases {
            assert_eq!(Frequency::parse(token).unwrap().season_length(), expected, "{token}");
        }
    }

    #[test]
    fn step_arithmetic_handles_calendar_units() {
        let start = ts("2014-01-31 00:00:00");
        let monthly = Frequency::parse("M").unwrap();
        assert_eq!(monthly.add_steps(start, 1).unwrap(), ts("2014-02-28 00:00:00"));
        assert_eq!(monthly.add_steps(start, 12).unwrap(), ts("2015-01-31 00:00:00"));

        let hourly = Frequency::parse("2H").unwrap();
        assert_eq!(hourly.add_steps(ts("2014-01-01 00:00:00"), 3).unwrap(), ts("2014-01-01 06:00:00"));

        let quarterly = Frequency::parse("Q").unwrap();
        assert_eq!(quarterly.add_steps(ts("2014-01-01 00:00:00"), 2).unwrap(), ts("2014-07-01 00:00:00"));
    }

    #[test]
    fn truncation_snaps_to_grid() {
        let t = ts("2014-03-12 13:45:17");
        assert_eq!(Frequency::parse("H").unwrap().truncate(t), ts("2014-03-12 13:00:00"));
        assert_eq!(Frequency::parse("D").unwrap().truncate(t), ts("2014-03-12 00:00:00"));
        // 2014-03-12 is a Wednesday.
        assert_eq!(Frequency::parse("W").unwrap().truncate(t), ts("2014-03-10 00:00:00"));
        assert_eq!(Frequency::parse("M").unwrap().truncate(t), ts("2014-03-01 00:00:00"));
        assert_eq!(Frequency::parse("Q").unwrap().truncate(t), ts("2014-01-01 00:00:00"));
        assert_eq!(Frequency::parse("Y").unwrap().truncate(t), ts("2014-01-01 00:00:00"));
    }

    #[test]
    fn record_validation_checks_feature_lengths() {
        let freq = Frequency::parse("D").unwrap();
        let start = ts("2014-01-01 00:00:00");
        assert!(TimeSeriesRecord::new("a", start, freq, vec![], vec![], vec![]).is_err());
        let short_feat = TimeSeriesRecord::new(
            "a",
            start,
            freq,
            vec![Some(1.0), Some(2.0)],
            vec![vec![0.0]],
            vec![],
        );
        assert!(short_feat.is_err());
        // Features longer than the target are allowed (forecast-horizon extension).
        let extended = TimeSeriesRecord::new(
            "a",
            start,
            freq,
            vec![Some(1.0), Some(2.0)],
            vec![vec![0.0; 5]],
            vec![],
        );
        assert!(extended.is_ok());
    }

    #[test]
    fn date_only_timestamps_parse() {
        assert_eq!(parse_timestamp("2014-01-02").unwrap(), ts("2014-01-02 00:00:00"));
        assert!(parse_timestamp("02/01/2014").is_err());
    }
}
