//! Train/test splitting for simple and rolling-window backtests.

use crate::config::{ConfigValue, Configurable};
use crate::dataset::TimeSeriesRecord;
use crate::error::{Error, Result};

/// Rolling-window specification. Window `k` (0 = newest) truncates the
/// series at `T - k·stride`; the truth window is the last
/// `prediction_length` values of that truncation and the train view is
/// everything before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub prediction_length: usize,
    pub num_windows: usize,
    pub stride: usize,
}

impl SplitSpec {
    /// Simple split: one window, stride defaulting to the prediction length.
    pub fn simple(prediction_length: usize) -> Self {
        SplitSpec { prediction_length, num_windows: 1, stride: prediction_length }
    }

    pub fn rolling(prediction_length: usize, num_windows: usize) -> Self {
        SplitSpec { prediction_length, num_windows, stride: prediction_length }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prediction_length == 0 || self.num_windows == 0 || self.stride == 0 {
            return Err(Error::validation("prediction_length, num_windows and stride must be >= 1"));
        }
        Ok(())
    }

    /// Length a series must be truncated to so that training can never see
    /// any truth window.
    pub fn holdout(&self) -> usize {
        (self.num_windows - 1) * self.stride + self.prediction_length
    }
}

#[derive(Debug, Clone)]
pub struct BacktestWindow {
    /// Window index, 0 = newest.
    pub window: usize,
    /// The series truncated to everything before this window's truth.
    pub train: TimeSeriesRecord,
    pub truth: Vec<Option<f64>>,
}

/// Cut the spec's windows out of one record, oldest first. Windows whose
/// truncation leaves no training history are dropped; a series too short
/// for any window yields an empty vector (callers count those).
pub fn split_record(record: &TimeSeriesRecord, spec: &SplitSpec) -> Result<Vec<BacktestWindow>> {
    spec.validate()?;
    let len = record.target.len();
    let mut windows = Vec::new();
    for k in (0..spec.num_windows).rev() {
        let cut = match len.checked_sub(k * spec.stride) {
            Some(cut) => cut,
            None => continue,
        };
        if cut < spec.prediction_length + 1 {
            continue;
        }
        let split = cut - spec.prediction_length;
        let mut train = record.clone();
        train.target.truncate(split);
        // Dynamic features keep their full length: they may legitimately
        // cover the forecast horizon.
        let truth = record.target[split..cut].to_vec();
        windows.push(BacktestWindow { window: k, train, truth });
    }
    Ok(windows)
}

/// Truncate a record for global-model training so no truth window leaks in.
/// Returns None when nothing would remain.
pub fn training_cutoff(record: &TimeSeriesRecord, spec: &SplitSpec) -> Option<TimeSeriesRecord> {
    let keep = record.target.len().checked_sub(spec.holdout())?;
    if keep == 0 {
        return None;
    }
    let mut out = record.clone();
    out.target.truncate(keep);
    Some(out)
}

impl Configurable for SplitSpec {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "SplitSpec",
            vec![
                ("prediction_length", ConfigValue::Int(self.prediction_length as i64)),
                ("num_windows", ConfigValue::Int(self.num_windows as i64)),
                ("stride", ConfigValue::Int(self.stride as i64)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        let spec = SplitSpec {
            prediction_length: value.get("prediction_length")?.as_usize()?,
            num_windows: value.get("num_windows")?.as_usize()?,
            stride: value.get("stride")?.as_usize()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}
