//! Stateless estimator/predictor API.
//!
//! An [`Estimator`] turns a training dataset into a [`Predictor`];
//! predictors are immutable and shareable across threads. Classical models
//! that fit per series (NPTS, state-space presets) are pure predictors:
//! their `train` ignores the dataset and parameter estimation happens at
//! prediction time on the series being forecast.

use crate::config::{ConfigValue, Configurable};
use crate::dataset::{Dataset, TimeSeriesRecord};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::neuralqr::{self, MlpParameters, MlpQrConfig, TrainerConfig};
use crate::npts::{npts_forecast, NptsConfig};
use crate::ssm::{fit_mle, forecast_sample_paths, SsmPreset};

pub trait Predictor: Send + Sync {
    /// Forecast `horizon` steps past the end of `record`. `seed` pins all
    /// sampling; deterministic predictors may ignore it.
    fn predict(&self, record: &TimeSeriesRecord, horizon: usize, seed: u64) -> Result<Forecast>;
}

pub trait Estimator: Send + Sync {
    fn train(&self, data: &dyn Dataset) -> Result<Box<dyn Predictor>>;

    /// Global estimators consume the training dataset; per-series models do not.
    fn is_global(&self) -> bool {
        false
    }

    /// Full configuration with every effective argument, for experiment logs.
    fn config(&self) -> ConfigValue;
}

// ---------------------------------------------------------------------------
// NPTS

#[derive(Debug, Clone, Default)]
pub struct NptsEstimator {
    pub config: NptsConfig,
}

impl NptsEstimator {
    pub fn new(config: NptsConfig) -> Result<Self> {
        config.validate()?;
        Ok(NptsEstimator { config })
    }
}

impl Estimator for NptsEstimator {
    fn train(&self, _data: &dyn Dataset) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(NptsPredictor { config: self.config.clone() }))
    }

    fn config(&self) -> ConfigValue {
        self.config.to_config()
    }
}

#[derive(Debug, Clone)]
pub struct NptsPredictor {
    pub config: NptsConfig,
}

impl Predictor for NptsPredictor {
    fn predict(&self, record: &TimeSeriesRecord, horizon: usize, seed: u64) -> Result<Forecast> {
        let paths = npts_forecast(&record.target, &self.config, horizon, seed)?;
        Forecast::sample_paths(record.item_id.clone(), record.end_timestamp()?, record.freq, paths)
    }
}

// ---------------------------------------------------------------------------
// State-space presets

#[derive(Debug, Clone)]
pub struct SsmEstimator {
    pub preset: SsmPreset,
    pub max_iters: usize,
    pub num_sample_paths: usize,
}

impl SsmEstimator {
    pub fn new(preset: SsmPreset) -> Result<Self> {
        preset.validate()?;
        Ok(SsmEstimator { preset, max_iters: 400, num_sample_paths: 100 })
    }
}

impl Estimator for SsmEstimator {
    fn train(&self, _data: &dyn Dataset) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(SsmPredictor {
            preset: self.preset,
            max_iters: self.max_iters,
            num_sample_paths: self.num_sample_paths,
        }))
    }

    fn config(&self) -> ConfigValue {
        let season = match self.preset {
            SsmPreset::Seasonal { season_length } => season_length as i64,
            _ => 0,
        };
        ConfigValue::call(
            "SsmEstimator",
            vec![
                ("preset", ConfigValue::str(self.preset.name())),
                ("season_length", ConfigValue::Int(season)),
                ("max_iters", ConfigValue::Int(self.max_iters as i64)),
                ("num_sample_paths", ConfigValue::Int(self.num_sample_paths as i64)),
            ],
        )
    }
}

/// Pure predictor: maximum-likelihood fit on the series at prediction time,
/// then sample-path forecasting from the filtered state.
#[derive(Debug, Clone)]
pub struct SsmPredictor {
    pub preset: SsmPreset,
    pub max_iters: usize,
    pub num_sample_paths: usize,
}

impl Predictor for SsmPredictor {
    fn predict(&self, record: &TimeSeriesRecord, horizon: usize, seed: u64) -> Result<Forecast> {
        let fit = fit_mle(&self.preset, &record.target, self.max_iters)?;
        let params = self.preset.expand(&fit.params, record.target.len())?;
        let paths = forecast_sample_paths(&params, &record.target, horizon, self.num_sample_paths, seed)?;
        Forecast::sample_paths(record.item_id.clone(), record.end_timestamp()?, record.freq, paths)
    }
}

// ---------------------------------------------------------------------------
// Feedforward quantile regression

#[derive(Debug, Clone)]
pub struct MlpQrEstimator {
    pub config: MlpQrConfig,
    pub trainer: TrainerConfig,
}

impl MlpQrEstimator {
    pub fn new(config: MlpQrConfig, trainer: TrainerConfig) -> Result<Self> {
        config.validate()?;
        trainer.validate()?;
        Ok(MlpQrEstimator { config, trainer })
    }
}

impl Estimator for MlpQrEstimator {
    fn train(&self, data: &dyn Dataset) -> Result<Box<dyn Predictor>> {
        let trained = neuralqr::train(&self.config, &self.trainer, data)?;
        Ok(Box::new(MlpQrPredictor { params: trained.params, config: self.config.clone() }))
    }

    fn is_global(&self) -> bool {
        true
    }

    fn config(&self) -> ConfigValue {
        ConfigValue::call(
            "MlpQrEstimator",
            vec![
                ("config", self.config.to_config()),
                ("trainer", self.trainer.to_config()),
            ],
        )
    }
}

#[derive(Debug, Clone)]
pub struct MlpQrPredictor {
    pub params: MlpParameters,
    pub config: MlpQrConfig,
}

impl Predictor for MlpQrPredictor {
    fn predict(&self, record: &TimeSeriesRecord, horizon: usize, _seed: u64) -> Result<Forecast> {
        if horizon != self.config.prediction_length {
            return Err(Error::validation(format!(
                "this predictor forecasts exactly {} steps, requested {horizon}",
                self.config.prediction_length
            )));
        }
        neuralqr::predict(&self.params, &self.config, record)
    }
}

// ---------------------------------------------------------------------------
// Registry

/// Rebuild an estimator from its logged configuration. Unknown component
/// names are an error naming the type.
pub fn estimator_from_config(value: &ConfigValue) -> Result<Box<dyn Estimator>> {
    match value.call_name()? {
        "NptsEstimator" => Ok(Box::new(NptsEstimator::new(NptsConfig::from_config(value)?)?)),
        "SsmEstimator" => {
            let preset = SsmPreset::parse(
                value.get("preset")?.as_str()?,
                value.get("season_length")?.as_usize()?.max(2),
            )?;
            Ok(Box::new(SsmEstimator {
                preset,
                max_iters: value.get("max_iters")?.as_usize()?,
                num_sample_paths: value.get("num_sample_paths")?.as_usize()?,
            }))
        }
        "MlpQrEstimator" => {
            let config = MlpQrConfig::from_config(value.get("config")?)?;
            let trainer = TrainerConfig::from_config(value.get("trainer")?)?;
            Ok(Box::new(MlpQrEstimator::new(config, trainer)?))
        }
        other => Err(Error::config(format!("unregistered estimator type '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;
    use crate::dataset::{parse_timestamp, Frequency, InMemoryDataset};

    fn record(values: &[f64]) -> TimeSeriesRecord {
        TimeSeriesRecord::new(
            "r",
            parse_timestamp("2024-01-01 00:00:00").unwrap(),
            Frequency::parse("D").unwrap(),
            values.iter().map(|v| Some(*v)).collect(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn npts_round_trips_through_registry() {
        let est = NptsEstimator::new(NptsConfig { alpha: 2.5, ..NptsConfig::default() }).unwrap();
        let rebuilt = estimator_from_config(&parse(&est.config().render()).unwrap()).unwrap();
        assert_eq!(rebuilt.config(), est.config());
    }

    #[test]
    fn ssm_estimator_round_trips_through_registry() {
        let est = SsmEstimator::new(SsmPreset::Seasonal { season_length: 24 }).unwrap();
        let rebuilt = estimator_from_config(&parse(&est.config().render()).unwrap()).unwrap();
        assert_eq!(rebuilt.config(), est.config());
    }

    #[test]
    fn mlpqr_estimator_round_trips_through_registry() {
        let est = MlpQrEstimator::new(MlpQrConfig::new(7), TrainerConfig::default()).unwrap();
        let rebuilt = estimator_from_config(&parse(&est.config().render()).unwrap()).unwrap();
        assert_eq!(rebuilt.config(), est.config());
    }

    #[test]
    fn unknown_estimator_errors_with_name() {
        let err = estimator_from_config(&parse("FancyEstimator(x=1)").unwrap()).err().unwrap();
        assert!(err.to_string().contains("FancyEstimator"));
    }

    #[test]
    fn npts_predictor_emits_sample_paths() {
        let est = NptsEstimator::new(NptsConfig { alpha: 1.0, num_sample_paths: 11, ..NptsConfig::default() })
            .unwrap();
        let predictor = est.train(&InMemoryDataset::default()).unwrap();
        let rec = record(&[1.0, 2.0, 3.0, 4.0]);
        let f = predictor.predict(&rec, 3, 9).unwrap();
        assert_eq!(f.horizon(), 3);
        assert_eq!(f.start, rec.end_timestamp().unwrap());
    }

    #[test]
    fn ssm_predictor_forecasts_level() {
        let est = SsmEstimator::new(SsmPreset::LocalLevel).unwrap();
        let predictor = est.train(&InMemoryDataset::default()).unwrap();
        let values: Vec<f64> = (0..40).map(|i| 5.0 + 0.05 * ((i * 7) % 3) as f64).collect();
        let rec = record(&values);
        let f = predictor.predict(&rec, 2, 4).unwrap();
        let median = f.quantile(0.5).unwrap();
        assert!((median[0] - 5.0).abs() < 1.0, "median {median:?}");
    }
}
