//! Composable transformations over record streams.
//!
//! A [`Pipeline`] applies its steps left to right to each record; an empty
//! pipeline is the identity. Instance splitting (the training-time sampler
//! that cuts context/future windows out of series) lives here too, as the
//! final stage that turns records into [`TrainingInstance`]s.

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::config::{ConfigValue, Configurable};
use crate::dataset::{FreqUnit, Frequency, TimeSeriesRecord};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Box-Cox

/// Box-Cox power transform: `(z^λ - 1)/λ`, or `ln z` at λ = 0.
///
/// Requires `z > 0` for λ ≤ 0 and `z ≥ 0` for λ > 0.
pub fn boxcox_forward(z: f64, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 && z <= 0.0 {
        return Err(Error::domain(format!("box-cox with lambda={lambda} requires positive input, got {z}")));
    }
    if z < 0.0 {
        return Err(Error::domain(format!("box-cox requires non-negative input, got {z}")));
    }
    if lambda == 0.0 {
        Ok(z.ln())
    } else {
        Ok((z.powf(lambda) - 1.0) / lambda)
    }
}

/// Inverse of [`boxcox_forward`]: `(λw + 1)^(1/λ)`, or `exp(w)` at λ = 0.
pub fn boxcox_inverse(w: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        Ok(w.exp())
    } else {
        let base = lambda * w + 1.0;
        if base < 0.0 {
            return Err(Error::domain(format!(
                "box-cox inverse with lambda={lambda} undefined at {w} (lambda*w + 1 < 0)"
            )));
        }
        Ok(base.powf(1.0 / lambda))
    }
}

// ---------------------------------------------------------------------------
// Record-level transformations

/// The name of an appended feature is not tracked; features are positional.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformStep {
    /// Replace missing target values by carry-forward (0 before the first
    /// observation) and append a 0/1 observed-indicator feature.
    MarkMissing,
    /// Append calendar features, normalized to [-0.5, 0.5], covering the
    /// target plus `extend_steps` future steps.
    AddTimeFeatures { extend_steps: usize },
    /// Box-Cox transform the target in place (missing values pass through).
    BoxCox { lambda: f64 },
}

impl TransformStep {
    pub fn apply(&self, mut record: TimeSeriesRecord) -> Result<TimeSeriesRecord> {
        match self {
            TransformStep::MarkMissing => {
                let (filled, indicator) = mark_missing_values(&record.target);
                record.target = filled.into_iter().map(Some).collect();
                record.feat_dynamic_real.push(indicator);
                Ok(record)
            }
            TransformStep::AddTimeFeatures { extend_steps } => {
                let total = record.target.len() + extend_steps;
                let features = time_features(record.freq, record.start, total)?;
                record.feat_dynamic_real.extend(features);
                Ok(record)
            }
            TransformStep::BoxCox { lambda } => {
                let mut target = Vec::with_capacity(record.target.len());
                for v in &record.target {
                    target.push(match v {
                        Some(z) => Some(boxcox_forward(*z, *lambda)?),
                        None => None,
                    });
                }
                record.target = target;
                Ok(record)
            }
        }
    }
}

/// Carry-forward fill plus observed indicator.
pub fn mark_missing_values(target: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut filled = Vec::with_capacity(target.len());
    let mut indicator = Vec::with_capacity(target.len());
    let mut last = 0.0;
    for v in target {
        match v {
            Some(z) => {
                last = *z;
                filled.push(*z);
                indicator.push(1.0);
            }
            None => {
                filled.push(last);
                indicator.push(0.0);
            }
        }
    }
    (filled, indicator)
}

/// Calendar features for `len` steps from `start`, each scaled to
/// `x / (cardinality - 1) - 0.5`. The feature set depends on the unit:
/// minute → (minute-of-hour, hour-of-day), hour → (hour-of-day, day-of-week),
/// day → (day-of-week, day-of-month), week → week-of-year,
/// month → month-of-year, quarter → quarter-of-year, year → none.
pub fn time_features(freq: Frequency, start: NaiveDateTime, len: usize) -> Result<Vec<Vec<f64>>> {
    let extractors: Vec<fn(NaiveDateTime) -> f64> = match freq.unit() {
        FreqUnit::Minute => vec![
            |t| f64::from(t.minute()) / 59.0 - 0.5,
            |t| f64::from(t.hour()) / 23.0 - 0.5,
        ],
        FreqUnit::Hour => vec![
            |t| f64::from(t.hour()) / 23.0 - 0.5,
            |t| f64::from(t.weekday().num_days_from_monday()) / 6.0 - 0.5,
        ],
        FreqUnit::Day => vec![
            |t| f64::from(t.weekday().num_days_from_monday()) / 6.0 - 0.5,
            |t| f64::from(t.day() - 1) / 30.0 - 0.5,
        ],
        FreqUnit::Week => vec![|t| f64::from(t.iso_week().week() - 1) / 52.0 - 0.5],
        FreqUnit::Month => vec![|t| f64::from(t.month() - 1) / 11.0 - 0.5],
        FreqUnit::Quarter => vec![|t| f64::from(t.month0() / 3) / 3.0 - 0.5],
        FreqUnit::Year => vec![],
    };
    let mut features = vec![Vec::with_capacity(len); extractors.len()];
    for step in 0..len {
        let ts = freq.add_steps(start, step as i64)?;
        for (row, f) in features.iter_mut().zip(&extractors) {
            row.push(f(ts));
        }
    }
    Ok(features)
}

/// Ordered sequence of transformation steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pipeline {
    pub steps: Vec<TransformStep>,
}

impl Pipeline {
    pub fn new(steps: Vec<TransformStep>) -> Self {
        Pipeline { steps }
    }

    pub fn apply(&self, record: TimeSeriesRecord) -> Result<TimeSeriesRecord> {
        let mut record = record;
        for step in &self.steps {
            record = step.apply(record)?;
        }
        Ok(record)
    }

    pub fn apply_stream<'a, I>(&'a self, records: I) -> impl Iterator<Item = Result<TimeSeriesRecord>> + 'a
    where
        I: Iterator<Item = Result<TimeSeriesRecord>> + 'a,
    {
        records.map(move |r| r.and_then(|rec| self.apply(rec)))
    }

    /// Concatenation; `a.then(b)` applies `a`'s steps, then `b`'s.
    pub fn then(mut self, other: Pipeline) -> Pipeline {
        self.steps.extend(other.steps);
        self
    }
}

impl Configurable for TransformStep {
    fn to_config(&self) -> ConfigValue {
        match self {
            TransformStep::MarkMissing => ConfigValue::call("MarkMissing", vec![]),
            TransformStep::AddTimeFeatures { extend_steps } => ConfigValue::call(
                "AddTimeFeatures",
                vec![("extend_steps", ConfigValue::Int(*extend_steps as i64))],
            ),
            TransformStep::BoxCox { lambda } => {
                ConfigValue::call("BoxCox", vec![("lambda", ConfigValue::Float(*lambda))])
            }
        }
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        match value.call_name()? {
            "MarkMissing" => Ok(TransformStep::MarkMissing),
            "AddTimeFeatures" => Ok(TransformStep::AddTimeFeatures { extend_steps: value.get("extend_steps")?.as_usize()? }),
            "BoxCox" => Ok(TransformStep::BoxCox { lambda: value.get("lambda")?.as_f64()? }),
            other => Err(Error::config(format!("unknown transform step '{other}'"))),
        }
    }
}

impl Configurable for Pipeline {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "Pipeline",
            vec![("steps", ConfigValue::List(self.steps.iter().map(|s| s.to_config()).collect()))],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        if value.call_name()? != "Pipeline" {
            return Err(Error::config(format!("expected Pipeline, found {}", value.call_name()?)));
        }
        let steps = value
            .get("steps")?
            .as_list()?
            .iter()
            .map(TransformStep::from_config)
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline { steps })
    }
}

// ---------------------------------------------------------------------------
// Instance splitting

/// One (context, future) window cut from a series, left-padded with zeros
/// when history is shorter than the context length.
///
/// `past_is_pad` is 1 exactly at padded positions. `past_observed` is 1 at
/// real positions whose target was observed (missing and padded positions
/// are 0). Feature matrices are feature-major: one row per dynamic feature.
/// In test mode `future_target` is empty; in train mode its length is
/// exactly the prediction length and all values are observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub item_id: String,
    pub freq: Frequency,
    pub past_target: Vec<f64>,
    pub future_target: Vec<f64>,
    pub past_is_pad: Vec<f64>,
    pub past_observed: Vec<f64>,
    pub past_feat: Vec<Vec<f64>>,
    pub future_feat: Vec<Vec<f64>>,
    pub forecast_start: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Sample split points so that the expected number of instances per
    /// series equals `num_instances`.
    Train { num_instances: f64 },
    /// Exactly one instance per record, with the forecast starting right
    /// after the last target value.
    Test,
}

/// Cuts training or test instances out of records.
#[derive(Debug)]
pub struct InstanceSplitter {
    context_length: usize,
    prediction_length: usize,
    mode: SplitMode,
    rng: ChaCha8Rng,
    skipped: u64,
}

impl InstanceSplitter {
    pub fn new(context_length: usize, prediction_length: usize, mode: SplitMode, seed: u64) -> Result<Self> {
        if context_length == 0 {
            return Err(Error::validation("context_length must be >= 1"));
        }
        if prediction_length == 0 {
            return Err(Error::validation("prediction_length must be >= 1"));
        }
        if let SplitMode::Train { num_instances } = &mode {
            if !num_instances.is_finite() || *num_instances <= 0.0 {
                return Err(Error::validation("num_instances must be positive"));
            }
        }
        Ok(InstanceSplitter {
            context_length,
            prediction_length,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            skipped: 0,
        })
    }

    /// Series skipped so far because no valid split point existed.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn split_record(&mut self, record: &TimeSeriesRecord) -> Result<Vec<TrainingInstance>> {
        match self.mode {
            SplitMode::Test => Ok(vec![self.cut(record, record.target.len())?]),
            SplitMode::Train { num_instances } => {
                let len = record.target.len();
                if len < self.prediction_length {
                    self.skipped += 1;
                    return Ok(Vec::new());
                }
                // Valid split points leave a fully observed future window
                // inside the series.
                let valid: Vec<usize> = (0..=len - self.prediction_length)
                    .filter(|&f| record.target[f..f + self.prediction_length].iter().all(|v| v.is_some()))
                    .collect();
                if valid.is_empty() {
                    self.skipped += 1;
                    return Ok(Vec::new());
                }
                let p = num_instances / valid.len() as f64;
                let whole = p.floor() as usize;
                let frac = p - p.floor();
                let mut instances = Vec::new();
                for &f in &valid {
                    let mut copies = whole;
                    if self.rng.random::<f64>() < frac {
                        copies += 1;
                    }
                    for _ in 0..copies {
                        instances.push(self.cut(record, f)?);
                    }
                }
                Ok(instances)
            }
        }
    }

    pub fn split_stream<'a, I>(&'a mut self, records: I) -> impl Iterator<Item = Result<TrainingInstance>> + 'a
    where
        I: Iterator<Item = Result<TimeSeriesRecord>> + 'a,
    {
        records.flat_map(move |r| -> Vec<Result<TrainingInstance>> {
            match r.and_then(|rec| self.split_record(&rec)) {
                Ok(instances) => instances.into_iter().map(Ok).collect(),
                Err(e) => vec![Err(e)],
            }
        })
    }

    /// Cut the window with the forecast starting at position `split`.
    fn cut(&self, record: &TimeSeriesRecord, split: usize) -> Result<TrainingInstance> {
        let ctx = self.context_length;
        let pred = self.prediction_length;
        let mut past_target = Vec::with_capacity(ctx);
        let mut past_is_pad = Vec::with_capacity(ctx);
        let mut past_observed = Vec::with_capacity(ctx);
        for i in 0..ctx {
            let pos = split as i64 - ctx as i64 + i as i64;
            if pos < 0 {
                past_target.push(0.0);
                past_is_pad.push(1.0);
                past_observed.push(0.0);
            } else {
                match record.target[pos as usize] {
                    Some(v) => {
                        past_target.push(v);
                        past_observed.push(1.0);
                    }
                    None => {
                        past_target.push(0.0);
                        past_observed.push(0.0);
                    }
                }
                past_is_pad.push(0.0);
            }
        }

        let future_target: Vec<f64> = if matches!(self.mode, SplitMode::Test) {
            Vec::new()
        } else {
            record.target[split..split + pred]
                .iter()
                .map(|v| v.expect("future window checked observed"))
                .collect()
        };

        let slice_feat = |row: &Vec<f64>, from: i64, len: usize| -> Vec<f64> {
            (0..len)
                .map(|i| {
                    let pos = from + i as i64;
                    if pos < 0 || pos as usize >= row.len() {
                        0.0
                    } else {
                        row[pos as usize]
                    }
                })
                .collect()
        };
        let past_feat: Vec<Vec<f64>> = record
            .feat_dynamic_real
            .iter()
            .map(|row| slice_feat(row, split as i64 - ctx as i64, ctx))
            .collect();
        let future_feat: Vec<Vec<f64>> = record
            .feat_dynamic_real
            .iter()
            .map(|row| slice_feat(row, split as i64, pred))
            .collect();

        Ok(TrainingInstance {
            item_id: record.item_id.clone(),
            freq: record.freq,
            past_target,
            future_target,
            past_is_pad,
            past_observed,
            past_feat,
            future_feat,
            forecast_start: record.timestamp_at(split)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_timestamp;
    use proptest::prelude::*;

    fn record(target: Vec<Option<f64>>) -> TimeSeriesRecord {
        TimeSeriesRecord::new(
            "r",
            parse_timestamp("2024-01-01 00:00:00").unwrap(),
            Frequency::parse("D").unwrap(),
            target,
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn boxcox_known_values() {
        assert_eq!(boxcox_forward(3.0, 1.0).unwrap(), 2.0);
        assert!((boxcox_forward(std::f64::consts::E, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((boxcox_forward(4.0, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(boxcox_forward(0.0, 0.0).is_err());
        assert!(boxcox_forward(-1.0, -0.5).is_err());
        assert!(boxcox_forward(-1.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn boxcox_round_trip(z in 1e-6f64..100.0, lambda in -3.0f64..3.0) {
            let w = boxcox_forward(z, lambda).unwrap();
            let back = boxcox_inverse(w, lambda).unwrap();
            prop_assert!((back - z).abs() <= 1e-10 * z.max(1.0), "z={z} lambda={lambda} back={back}");
        }
    }

    #[test]
    fn mark_missing_carry_forward() {
        let (filled, ind) = mark_missing_values(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(filled, vec![1.0, 1.0, 3.0]);
        assert_eq!(ind, vec![1.0, 0.0, 1.0]);

        let (filled, ind) = mark_missing_values(&[None, None]);
        assert_eq!(filled, vec![0.0, 0.0]);
        assert_eq!(ind, vec![0.0, 0.0]);

        let (filled, ind) = mark_missing_values(&[None, Some(5.0)]);
        assert_eq!(filled, vec![0.0, 5.0]);
        assert_eq!(ind, vec![0.0, 1.0]);
    }

    #[test]
    fn time_feature_normalization() {
        // 2024-01-01 is a Monday.
        let start = parse_timestamp("2024-01-01 00:00:00").unwrap();
        let hourly = Frequency::parse("H").unwrap();
        let feats = time_features(hourly, start, 24).unwrap();
        assert_eq!(feats.len(), 2);
        assert_eq!(feats[0][0], -0.5); // hour 0
        assert_eq!(feats[0][23], 0.5); // hour 23
        assert_eq!(feats[1][0], -0.5); // Monday

        let monthly = Frequency::parse("M").unwrap();
        let feats = time_features(monthly, start, 12).unwrap();
        assert_eq!(feats[0][0], -0.5); // January
        assert_eq!(feats[0][11], 0.5); // December
    }

    #[test]
    fn empty_pipeline_is_identity() {
        let rec = record(vec![Some(1.0), None, Some(2.0)]);
        let out = Pipeline::default().apply(rec.clone()).unwrap();
        assert_eq!(out, rec);
    }

    #[test]
    fn pipeline_composition_is_concatenation() {
        let rec = record(vec![Some(1.0), None, Some(4.0)]);
        let a = Pipeline::new(vec![TransformStep::MarkMissing]);
        let b = Pipeline::new(vec![TransformStep::BoxCox { lambda: 0.5 }]);
        let seq = b.apply(a.apply(rec.clone()).unwrap()).unwrap();
        let combined = Pipeline::new(vec![TransformStep::MarkMissing])
            .then(Pipeline::new(vec![TransformStep::BoxCox { lambda: 0.5 }]))
            .apply(rec)
            .unwrap();
        assert_eq!(seq, combined);
    }

    #[test]
    fn pipeline_config_round_trip() {
        let p = Pipeline::new(vec![
            TransformStep::MarkMissing,
            TransformStep::AddTimeFeatures { extend_steps: 7 },
            TransformStep::BoxCox { lambda: 0.25 },
        ]);
        let back = Pipeline::from_config(&crate::config::parse(&p.to_config().render()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn test_mode_split_takes_tail() {
        let rec = record((1..=10).map(|v| Some(v as f64)).collect());
        let mut splitter = InstanceSplitter::new(5, 3, SplitMode::Test, 0).unwrap();
        let instances = splitter.split_record(&rec).unwrap();
        assert_eq!(instances.len(), 1);
        let inst = &instances[0];
        assert_eq!(inst.past_target, vec![6.0, 7.0, 8.0, 9.0, 10.0]);
        assert!(inst.future_target.is_empty());
        assert_eq!(inst.forecast_start, parse_timestamp("2024-01-11 00:00:00").unwrap());
    }

    #[test]
    fn short_history_left_pads() {
        let rec = record((1..=4).map(|v| Some(v as f64)).collect());
        let mut splitter = InstanceSplitter::new(6, 2, SplitMode::Test, 0).unwrap();
        let inst = splitter.split_record(&rec).unwrap().remove(0);
        assert_eq!(inst.past_is_pad, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(inst.past_target, vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(inst.past_observed, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn train_mode_skips_short_series() {
        let rec = record(vec![Some(1.0), Some(2.0)]);
        let mut splitter =
            InstanceSplitter::new(4, 3, SplitMode::Train { num_instances: 1.0 }, 0).unwrap();
        assert!(splitter.split_record(&rec).unwrap().is_empty());
        assert_eq!(splitter.skipped(), 1);
    }

    #[test]
    fn train_mode_future_windows_fully_observed() {
        let mut target: Vec<Option<f64>> = (0..30).map(|v| Some(v as f64)).collect();
        target[12] = None;
        let rec = record(target);
        let mut splitter =
            InstanceSplitter::new(5, 4, SplitMode::Train { num_instances: 30.0 }, 7).unwrap();
        let instances = splitter.split_record(&rec).unwrap();
        assert!(!instances.is_empty());
        for inst in &instances {
            assert_eq!(inst.future_target.len(), 4);
            // Windows overlapping the missing point at 12 are excluded, so no
            // future value can be the filled stand-in 0 except the true 0 at t=0.
            assert!(inst.future_target.iter().all(|v| (*v - 12.0).abs() > 1e-9));
        }
    }

    #[test]
    fn train_mode_expected_instance_count() {
        let rec = record((0..101).map(|v| Some(v as f64)).collect());
        let expected = 2.5;
        let mut splitter =
            InstanceSplitter::new(10, 1, SplitMode::Train { num_instances: expected }, 3).unwrap();
        let mut total = 0usize;
        let reps = 400;
        for _ in 0..reps {
            total += splitter.split_record(&rec).unwrap().len();
        }
        let mean = total as f64 / reps as f64;
        // Binomial concentration: std err ~ sqrt(2.5/400) ≈ 0.08.
        assert!((mean - expected).abs() < 0.3, "mean {mean}");
    }

    #[test]
    fn forecast_start_alignment_contract() {
        // forecast_start + k steps indexes future_target[k].
        let rec = record((0..20).map(|v| Some(v as f64)).collect());
        let mut splitter =
            InstanceSplitter::new(5, 3, SplitMode::Train { num_instances: 50.0 }, 1).unwrap();
        for inst in splitter.split_record(&rec).unwrap() {
            let offset = (inst.forecast_start - rec.start).num_days();
            for (k, v) in inst.future_target.iter().enumerate() {
                assert_eq!(*v, (offset + k as i64) as f64);
            }
        }
    }
}
