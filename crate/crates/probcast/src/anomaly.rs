//! Unsupervised anomaly detection on top of probabilistic forecasters.
//!
//! Two schemes: two-sided p-values from the per-step predictive CDF
//! (`2·min(F, 1-F)`, flagging `p < threshold`), and negative log-likelihood
//! thresholds calibrated as high empirical percentiles of per-step NLLs on
//! a training set. Empirical CDFs from sample paths use the midpoint
//! convention `(#{x < z} + ½·#{x = z}) / n` so exact ties never produce
//! p = 0 artifacts.

use crate::config::{ConfigValue, Configurable};
use crate::dataset::{Dataset, TimeSeriesRecord};
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::forecast::empirical_quantile_sorted;
use crate::ssm::{fit_mle, kalman_filter, SsmPreset};

#[derive(Debug, Clone, PartialEq)]
pub enum AnomalyMethod {
    /// Two-sided tail probability under the per-step predictive CDF.
    CdfPValue { threshold: f64 },
    /// NLL exceedance over thresholds calibrated at these levels.
    NllPercentile { levels: Vec<f64> },
}

impl AnomalyMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            AnomalyMethod::CdfPValue { threshold } => {
                if !(*threshold > 0.0 && *threshold < 1.0) {
                    return Err(Error::validation(format!("p-value threshold must lie in (0, 1), got {threshold}")));
                }
            }
            AnomalyMethod::NllPercentile { levels } => {
                if levels.is_empty()
                    || levels.windows(2).any(|w| !(w[0] < w[1]))
                    || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0))
                {
                    return Err(Error::validation("nll levels must be strictly ascending within (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

impl Default for AnomalyMethod {
    fn default() -> Self {
        AnomalyMethod::CdfPValue { threshold: 1e-4 }
    }
}

/// Per-step predictive distribution for p-value scoring: a parametric
/// distribution, or an empirical one from sample paths.
#[derive(Debug, Clone)]
pub enum PredictiveCdf {
    Distribution(Distribution),
    /// Samples, sorted ascending at construction.
    Empirical(Vec<f64>),
}

impl PredictiveCdf {
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("empirical cdf requires at least one sample"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PredictiveCdf::Empirical(samples))
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            PredictiveCdf::Distribution(d) => d.cdf(z),
            PredictiveCdf::Empirical(sorted) => {
                let below = sorted.partition_point(|x| *x < z);
                let at_or_below = sorted.partition_point(|x| *x <= z);
                let ties = at_or_below - below;
                (below as f64 + 0.5 * ties as f64) / sorted.len() as f64
            }
        }
    }
}

/// Two-sided tail probability of a CDF value.
pub fn two_sided_p_value(cdf_value: f64) -> f64 {
    2.0 * cdf_value.min(1.0 - cdf_value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyPoint {
    /// Step index within the series.
    pub index: usize,
    pub value: f64,
    /// p-value or NLL, depending on the method.
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct AnomalyReport {
    pub item_id: String,
    pub method: String,
    pub threshold: f64,
    pub points: Vec<AnomalyPoint>,
}

impl AnomalyReport {
    pub fn flagged_indices(&self) -> Vec<usize> {
        self.points.iter().filter(|p| p.flagged).map(|p| p.index).collect()
    }
}

/// Score observations against per-step predictive CDFs. Missing steps are
/// skipped; `cdfs` must cover every step of `observations`.
pub fn detect_cdf(
    item_id: &str,
    cdfs: &[PredictiveCdf],
    observations: &[Option<f64>],
    threshold: f64,
) -> Result<AnomalyReport> {
    AnomalyMethod::CdfPValue { threshold }.validate()?;
    if cdfs.len() != observations.len() {
        return Err(Error::validation(format!(
            "item '{item_id}': {} cdfs for {} observations",
            cdfs.len(),
            observations.len()
        )));
    }
    let mut points = Vec::new();
    for (index, obs) in observations.iter().enumerate() {
        let Some(value) = obs else { continue };
        let p = two_sided_p_value(cdfs[index].cdf(*value));
        points.push(AnomalyPoint { index, value: *value, score: p, flagged: p < threshold });
    }
    Ok(AnomalyReport { item_id: item_id.to_string(), method: "cdf_pvalue".to_string(), threshold, points })
}

/// Calibrated NLL thresholds, one per level.
#[derive(Debug, Clone, PartialEq)]
pub struct NllThresholds {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl NllThresholds {
    pub fn value_at(&self, level: f64) -> Result<f64> {
        self.levels
            .iter()
            .position(|l| *l == level)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::validation(format!("no calibrated threshold for level {level}")))
    }
}

/// Empirical quantiles of pooled per-step NLLs at the requested levels.
/// Warns when the pool is too small for the highest level to be stable.
pub fn calibrate_nll(nlls: &[f64], levels: &[f64]) -> Result<NllThresholds> {
    AnomalyMethod::NllPercentile { levels: levels.to_vec() }.validate()?;
    if nlls.is_empty() {
        return Err(Error::validation("nll calibration requires at least one scored step"));
    }
    let max_level = levels.last().copied().unwrap();
    let needed = (1.0 / (1.0 - max_level)).ceil() as usize;
    if nlls.len() < needed {
        log::warn!(
            "nll calibration on {} steps is unstable for level {max_level} (need at least {needed})",
            nlls.len()
        );
    }
    let mut sorted = nlls.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let values = levels.iter().map(|l| empirical_quantile_sorted(&sorted, *l)).collect();
    Ok(NllThresholds { levels: levels.to_vec(), values })
}

/// Flag steps whose NLL exceeds the threshold. The report score is the NLL.
pub fn detect_nll(
    item_id: &str,
    nlls: &[Option<f64>],
    observations: &[Option<f64>],
    threshold: f64,
) -> Result<AnomalyReport> {
    if nlls.len() != observations.len() {
        return Err(Error::validation(format!(
            "item '{item_id}': {} nll scores for {} observations",
            nlls.len(),
            observations.len()
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::validation("nll threshold must be finite"));
    }
    let mut points = Vec::new();
    for (index, (nll, obs)) in nlls.iter().zip(observations).enumerate() {
        let (Some(score), Some(value)) = (nll, obs) else { continue };
        points.push(AnomalyPoint { index, value: *value, score: *score, flagged: *score > threshold });
    }
    Ok(AnomalyReport { item_id: item_id.to_string(), method: "nll_percentile".to_string(), threshold, points })
}

// ---------------------------------------------------------------------------
// State-space adapters

/// One-step predictive Gaussians from the Kalman filter, one per step.
pub fn ssm_predictive_cdfs(params: &crate::ssm::SsmParams, z: &[Option<f64>]) -> Result<Vec<PredictiveCdf>> {
    let filter = kalman_filter(params, z)?;
    filter
        .steps
        .iter()
        .map(|s| {
            let std = s.predictive_var.max(1e-300).sqrt();
            Ok(PredictiveCdf::Distribution(Distribution::gaussian(s.predictive_mean, std)?))
        })
        .collect()
}

/// Fit a preset per series and score each step: CDF p-values against the
/// one-step predictive distribution.
pub fn detect_record_cdf(
    record: &TimeSeriesRecord,
    preset: &SsmPreset,
    max_iters: usize,
    threshold: f64,
) -> Result<AnomalyReport> {
    let fit = fit_mle(preset, &record.target, max_iters)?;
    let params = preset.expand(&fit.params, record.target.len())?;
    let cdfs = ssm_predictive_cdfs(&params, &record.target)?;
    detect_cdf(&record.item_id, &cdfs, &record.target, threshold)
}

/// Per-series NLL trace from a fitted preset.
#[derive(Debug, Clone)]
pub struct NllTrace {
    pub item_id: String,
    pub start: chrono::NaiveDateTime,
    pub freq: crate::dataset::Frequency,
    pub nlls: Vec<Option<f64>>,
    pub target: Vec<Option<f64>>,
}

/// Fit a preset per series over the whole dataset (fanning out across
/// series) and pool per-step NLLs for threshold calibration. Returns the
/// thresholds plus each series' NLL trace so detection does not refit.
pub fn calibrate_nll_ssm(
    data: &dyn Dataset,
    preset: &SsmPreset,
    max_iters: usize,
    levels: &[f64],
    executor: crate::runtime::Executor,
    chunk_size: usize,
) -> Result<(NllThresholds, Vec<NllTrace>)> {
    let mut pooled = Vec::new();
    let mut traces = Vec::new();
    let preset = *preset;
    executor.for_each_chunked(
        data.iter()?,
        chunk_size,
        move |record: TimeSeriesRecord| -> Result<NllTrace> {
            let fit = fit_mle(&preset, &record.target, max_iters)?;
            let params = preset.expand(&fit.params, record.target.len())?;
            let filter = kalman_filter(&params, &record.target)?;
            Ok(NllTrace {
                item_id: record.item_id,
                start: record.start,
                freq: record.freq,
                nlls: filter.step_nlls(),
                target: record.target,
            })
        },
        |trace| {
            pooled.extend(trace.nlls.iter().filter_map(|v| *v));
            traces.push(trace);
            Ok(())
        },
    )?;
    let thresholds = calibrate_nll(&pooled, levels)?;
    Ok((thresholds, traces))
}

impl Configurable for AnomalyMethod {
    fn to_config(&self) -> ConfigValue {
        match self {
            AnomalyMethod::CdfPValue { threshold } => ConfigValue::call(
                "CdfPValue",
                vec![("threshold", ConfigValue::Float(*threshold))],
            ),
            AnomalyMethod::NllPercentile { levels } => ConfigValue::call(
                "NllPercentile",
                vec![("levels", ConfigValue::float_list(levels))],
            ),
        }
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        let method = match value.call_name()? {
            "CdfPValue" => AnomalyMethod::CdfPValue { threshold: value.get("threshold")?.as_f64()? },
            "NllPercentile" => AnomalyMethod::NllPercentile { levels: value.get("levels")?.as_f64_list()? },
            other => return Err(Error::config(format!("unknown anomaly method '{other}'"))),
        };
        method.validate()?;
        Ok(method)
    }
}
