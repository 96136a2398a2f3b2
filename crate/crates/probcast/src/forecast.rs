//! Forecast objects: the joint predictive distribution over a horizon,
//! represented either as sample paths or as a grid of per-step quantiles,
//! behind a single quantile-extraction interface.

use chrono::NaiveDateTime;

use crate::dataset::{format_timestamp, Frequency};
use crate::error::{Error, Result};

/// Representation of the predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastValues {
    /// `n_paths` simulated trajectories, each of horizon length.
    SamplePaths(Vec<Vec<f64>>),
    /// Per-step quantile values: one row per horizon step, one column per
    /// level. Rows are non-decreasing across levels.
    QuantileGrid { levels: Vec<f64>, rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub item_id: String,
    pub start: NaiveDateTime,
    pub freq: Frequency,
    pub values: ForecastValues,
}

impl Forecast {
    pub fn sample_paths(
        item_id: impl Into<String>,
        start: NaiveDateTime,
        freq: Frequency,
        paths: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::validation("sample-path forecast requires at least one path"));
        }
        let horizon = paths[0].len();
        if horizon == 0 {
            return Err(Error::validation("forecast horizon must be >= 1"));
        }
        if paths.iter().any(|p| p.len() != horizon) {
            return Err(Error::validation("all sample paths must share the horizon length"));
        }
        Ok(Forecast {
            item_id: item_id.into(),
            start,
            freq,
            values: ForecastValues::SamplePaths(paths),
        })
    }

    pub fn quantile_grid(
        item_id: impl Into<String>,
        start: NaiveDateTime,
        freq: Frequency,
        levels: Vec<f64>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) || levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::validation("quantile levels must be strictly ascending within (0, 1)"));
        }
        if rows.is_empty() {
            return Err(Error::validation("forecast horizon must be >= 1"));
        }
        for row in &rows {
            if row.len() != levels.len() {
                return Err(Error::validation("each quantile row must have one value per level"));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::validation("quantile rows must be non-decreasing across levels"));
            }
        }
        Ok(Forecast {
            item_id: item_id.into(),
            start,
            freq,
            values: ForecastValues::QuantileGrid { levels, rows },
        })
    }

    pub fn horizon(&self) -> usize {
        match &self.values {
            ForecastValues::SamplePaths(paths) => paths[0].len(),
            ForecastValues::QuantileGrid { rows, .. } => rows.len(),
        }
    }

    /// Per-step quantile at level `q`.
    ///
    /// Sample paths: empirical quantile with linear interpolation between
    /// order statistics at position `(n-1)·q`. Quantile grids: exact at
    /// stored levels, linearly interpolated between them, clamped (with a
    /// warning) beyond the stored range.
    pub fn quantile(&self, q: f64) -> Result<Vec<f64>> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0, 1), got {q}")));
        }
        match &self.values {
            ForecastValues::SamplePaths(paths) => {
                let n = paths.len();
                let horizon = paths[0].len();
                let mut column = vec![0.0f64; n];
                let mut out = Vec::with_capacity(horizon);
                for step in 0..horizon {
                    for (i, path) in paths.iter().enumerate() {
                        column[i] = path[step];
                    }
                    column.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    out.push(empirical_quantile_sorted(&column, q));
                }
                Ok(out)
            }
            ForecastValues::QuantileGrid { levels, rows } => {
                let k = levels.len();
                if q < levels[0] || q > levels[k - 1] {
                    log::warn!(
                        "forecast '{}' ({}): quantile {q} outside stored levels [{}, {}], clamping",
                        self.item_id,
                        format_timestamp(self.start),
                        levels[0],
                        levels[k - 1]
                    );
                }
                Ok(rows.iter().map(|row| interpolate_level(levels, row, q)).collect())
            }
        }
    }

    /// Point forecast: per-step mean of sample paths, or the stored median
    /// for quantile grids (flagged in evaluation reports).
    pub fn mean(&self) -> Vec<f64> {
        match &self.values {
            ForecastValues::SamplePaths(paths) => {
                let n = paths.len() as f64;
                let horizon = paths[0].len();
                (0..horizon)
                    .map(|step| paths.iter().map(|p| p[step]).sum::<f64>() / n)
                    .collect()
            }
            ForecastValues::QuantileGrid { .. } => self.quantile(0.5).expect("0.5 is a valid level"),
        }
    }

    /// Sum each sample path over `window`, yielding samples from the
    /// distribution of the total over that interval.
    pub fn aggregate_sum(&self, window: std::ops::Range<usize>) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        if window.start >= window.end || window.end > horizon {
            return Err(Error::validation(format!(
                "aggregation window {}..{} out of range for horizon {horizon}",
                window.start, window.end
            )));
        }
        match &self.values {
            ForecastValues::SamplePaths(paths) => {
                Ok(paths.iter().map(|p| p[window.clone()].iter().sum()).collect())
            }
            ForecastValues::QuantileGrid { .. } => Err(Error::validation(
                "aggregate_sum requires a sample-path forecast".to_string(),
            )),
        }
    }

    /// Timestamp of forecast step `k` (0-based).
    pub fn timestamp_at(&self, k: usize) -> Result<NaiveDateTime> {
        self.freq.add_steps(self.start, k as i64)
    }
}

/// Empirical quantile of an ascending slice: linear interpolation between
/// order statistics at position `(n-1)·q`.
pub fn empirical_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

fn interpolate_level(levels: &[f64], row: &[f64], q: f64) -> f64 {
    let k = levels.len();
    if q <= levels[0] {
        return row[0];
    }
    if q >= levels[k - 1] {
        return row[k - 1];
    }
    let idx = levels.partition_point(|l| *l < q);
    if levels[idx] == q {
        return row[idx];
    }
    let (l0, l1) = (levels[idx - 1], levels[idx]);
    let frac = (q - l0) / (l1 - l0);
    row[idx - 1] * (1.0 - frac) + row[idx] * frac
}
