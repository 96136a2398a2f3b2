//! The backtest driver: split, train, predict, evaluate, in one streaming
//! pass per stage.
//!
//! Records are pulled in chunks and evaluated independently (in parallel
//! when enabled); rows and aggregates are folded in input order, so a
//! backtest is bit-reproducible for a fixed experiment configuration
//! regardless of the execution mode.

use crate::config::{derive_seed, ConfigValue, Configurable};
use crate::dataset::{Dataset, InMemoryDataset, TimeSeriesRecord};
use crate::error::{Error, Result};
use crate::model::Estimator;
use crate::runtime::Executor;

use super::{
    evaluate_window, split_record, training_cutoff, EvalAccumulator, EvaluatorConfig, MetricRow,
    SplitSpec, WindowTotals,
};

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub split: SplitSpec,
    pub evaluator: EvaluatorConfig,
    pub seed: u64,
}

#[derive(Debug)]
pub struct BacktestOutput {
    pub rows: Vec<MetricRow>,
    pub report: super::AggregateReport,
}

/// Run the full scenario: train the estimator on data that excludes every
/// truth window, forecast each window from its train view, and score
/// against the held-out truth.
pub fn backtest(
    data: &dyn Dataset,
    estimator: &dyn Estimator,
    config: &BacktestConfig,
    executor: Executor,
) -> Result<BacktestOutput> {
    config.split.validate().map_err(|e| e.in_stage("split"))?;
    config.evaluator.validate().map_err(|e| e.in_stage("evaluate"))?;

    // Global models need a training pass over truncated series; per-series
    // predictors train on nothing.
    let predictor = if estimator.is_global() {
        let mut train_records: Vec<TimeSeriesRecord> = Vec::new();
        for record in data.iter().map_err(|e| e.in_stage("train"))? {
            let record = record.map_err(|e| e.in_stage("train"))?;
            if let Some(truncated) = training_cutoff(&record, &config.split) {
                train_records.push(truncated);
            }
        }
        let train_data = InMemoryDataset::new(train_records);
        estimator.train(&train_data).map_err(|e| e.in_stage("train"))?
    } else {
        estimator.train(&InMemoryDataset::default()).map_err(|e| e.in_stage("train"))?
    };

    let split = config.split;
    let levels = config.evaluator.quantile_levels.clone();
    let seed = config.seed;
    let predictor = predictor.as_ref();

    let per_record = |record: TimeSeriesRecord| -> Result<Vec<(MetricRow, WindowTotals)>> {
        let season_length = record.freq.season_length();
        let windows = split_record(&record, &split).map_err(|e| e.in_stage("split"))?;
        let mut out = Vec::with_capacity(windows.len());
        for w in windows {
            let item_seed = derive_seed(seed, &format!("predict/{}/{}", record.item_id, w.window));
            let forecast = predictor
                .predict(&w.train, split.prediction_length, item_seed)
                .map_err(|e| e.in_stage("predict"))?;
            let pair = evaluate_window(&w.train.target, &w.truth, &forecast, &levels, season_length, w.window)
                .map_err(|e| e.in_stage("evaluate"))?;
            out.push(pair);
        }
        Ok(out)
    };

    let mut rows = Vec::new();
    let mut accumulator = EvalAccumulator::new(levels.clone());
    let mut skipped_series = 0u64;
    executor.for_each_chunked(
        data.iter().map_err(|e| e.in_stage("evaluate"))?,
        config.evaluator.chunk_size,
        per_record,
        |pairs| {
            if pairs.is_empty() {
                skipped_series += 1;
            }
            for (row, totals) in pairs {
                accumulator.add(&row, &totals);
                rows.push(row);
            }
            Ok(())
        },
    )?;

    let report = accumulator.finalize(skipped_series);
    Ok(BacktestOutput { rows, report })
}

/// Everything needed to re-run a backtest: dataset location, estimator,
/// split, evaluator, and the master seed. Serializes with all defaults
/// expanded; parsing the rendered text reconstructs an equal experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data_path: String,
    pub freq: String,
    pub estimator: ConfigValue,
    pub split: SplitSpec,
    pub evaluator: EvaluatorConfig,
    pub seed: u64,
}

impl Configurable for ExperimentConfig {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "BacktestExperiment",
            vec![
                ("data", ConfigValue::str(&self.data_path)),
                ("freq", ConfigValue::str(&self.freq)),
                ("estimator", self.estimator.clone()),
                ("split", self.split.to_config()),
                ("evaluator", self.evaluator.to_config()),
                ("seed", ConfigValue::Int(self.seed as i64)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        if value.call_name()? != "BacktestExperiment" {
            return Err(Error::config(format!(
                "expected BacktestExperiment, found {}",
                value.call_name()?
            )));
        }
        Ok(ExperimentConfig {
            data_path: value.get("data")?.as_str()?.to_string(),
            freq: value.get("freq")?.as_str()?.to_string(),
            estimator: value.get("estimator")?.clone(),
            split: SplitSpec::from_config(value.get("split")?)?,
            evaluator: EvaluatorConfig::from_config(value.get("evaluator")?)?,
            seed: value.get("seed")?.as_u64()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_timestamp, Frequency};
    use crate::model::NptsEstimator;
    use crate::npts::NptsConfig;

    fn constant_record(id: &str, value: f64, len: usize) -> TimeSeriesRecord {
        TimeSeriesRecord::new(
            id,
            parse_timestamp("2024-01-01 00:00:00").unwrap(),
            Frequency::parse("D").unwrap(),
            vec![Some(value); len],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn npts(alpha: f64) -> NptsEstimator {
        NptsEstimator::new(NptsConfig { alpha, num_sample_paths: 50, ..NptsConfig::default() }).unwrap()
    }

    #[test]
    fn naive_on_constant_series_is_perfect() {
        let data = InMemoryDataset::new(vec![
            constant_record("a", 5.0, 40),
            constant_record("b", 7.0, 40),
        ]);
        let config = BacktestConfig {
            split: SplitSpec::simple(5),
            evaluator: EvaluatorConfig::default(),
            seed: 1,
        };
        let out = backtest(&data, &npts(f64::INFINITY), &config, Executor::default()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.report.wmape, 0.0);
        assert_eq!(out.report.mean_crps, 0.0);
    }

    #[test]
    fn seasonal_repeat_scores_zero_mase() {
        // Period-3 pattern: seasonal resampling with the matching season
        // nails every step, while the MASE denominator (daily season 7)
        // stays positive.
        let pattern = [10.0, 14.0, 9.0];
        let values: Vec<Option<f64>> = (0..60).map(|i| Some(pattern[i % 3])).collect();
        let record = TimeSeriesRecord::new(
            "s",
            parse_timestamp("2024-01-01 00:00:00").unwrap(),
            Frequency::parse("D").unwrap(),
            values,
            vec![],
            vec![],
        )
        .unwrap();
        let estimator = NptsEstimator::new(NptsConfig {
            alpha: 0.5,
            seasonal: true,
            season_length: 3,
            num_sample_paths: 20,
            ..NptsConfig::default()
        })
        .unwrap();
        let config = BacktestConfig {
            split: SplitSpec::simple(6),
            evaluator: EvaluatorConfig::default(),
            seed: 3,
        };
        let out = backtest(&InMemoryDataset::new(vec![record]), &estimator, &config, Executor::default()).unwrap();
        assert!(out.rows[0].mase < 1e-9, "mase {}", out.rows[0].mase);
    }

    fn wavy_record(id: &str, level: f64, len: usize) -> TimeSeriesRecord {
        TimeSeriesRecord::new(
            id,
            parse_timestamp("2024-01-01 00:00:00").unwrap(),
            Frequency::parse("D").unwrap(),
            (0..len).map(|i| Some(level + (i as f64 * 0.9).sin())).collect(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let data = InMemoryDataset::new(
            (0..12)
                .map(|i| wavy_record(&format!("s{i}"), 2.0 + i as f64, 50 + i))
                .collect::<Vec<_>>(),
        );
        let config = BacktestConfig {
            split: SplitSpec::rolling(6, 2),
            evaluator: EvaluatorConfig { chunk_size: 5, ..EvaluatorConfig::default() },
            seed: 42,
        };
        let estimator = npts(1.0);
        let a = backtest(&data, &estimator, &config, Executor::default()).unwrap();
        let b = backtest(&data, &estimator, &config, Executor::default()).unwrap();
        assert_eq!(a.report, b.report);
        let seq = backtest(&data, &estimator, &config, Executor::Sequential).unwrap();
        assert_eq!(a.report, seq.report);
        for (x, y) in a.rows.iter().zip(&seq.rows) {
            assert_eq!(x.item_id, y.item_id);
            assert_eq!(x.window, y.window);
            assert!(x.crps == y.crps || (x.crps.is_nan() && y.crps.is_nan()));
        }
    }

    #[test]
    fn short_series_counted_not_fatal() {
        let data = InMemoryDataset::new(vec![
            constant_record("long", 1.0, 30),
            constant_record("short", 1.0, 3),
        ]);
        let config = BacktestConfig {
            split: SplitSpec::simple(5),
            evaluator: EvaluatorConfig::default(),
            seed: 0,
        };
        let out = backtest(&data, &npts(0.0), &config, Executor::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.report.skipped_series, 1);
    }

    #[test]
    fn stage_labels_propagate() {
        let data = InMemoryDataset::new(vec![constant_record("a", 1.0, 30)]);
        let config = BacktestConfig {
            split: SplitSpec { prediction_length: 0, num_windows: 1, stride: 1 },
            evaluator: EvaluatorConfig::default(),
            seed: 0,
        };
        let err = backtest(&data, &npts(0.0), &config, Executor::default()).unwrap_err();
        assert!(err.to_string().contains("split"), "{err}");
    }

    #[test]
    fn experiment_config_round_trip() {
        let experiment = ExperimentConfig {
            data_path: "data/series.jsonl".to_string(),
            freq: "H".to_string(),
            estimator: npts(1.5).config(),
            split: SplitSpec::rolling(24, 7),
            evaluator: EvaluatorConfig::default(),
            seed: 11,
        };
        let text = experiment.to_config().render();
        let back = ExperimentConfig::from_config(&crate::config::parse(&text).unwrap()).unwrap();
        assert_eq!(back.to_config(), experiment.to_config());
    }
}
