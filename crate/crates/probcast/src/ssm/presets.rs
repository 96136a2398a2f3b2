//! Structural presets: level, level+trend, and level+seasonal models in
//! innovation form.
//!
//! The seasonal block is the standard sum-to-zero rotating dummy of size
//! `season_length - 1`: the newest seasonal effect is minus the sum of the
//! previous ones plus an innovation, older effects shift down. Free
//! parameters are the observation noise, one innovation strength per
//! structural component, the prior means, and a shared prior scale.

use nalgebra::{DMatrix, DVector};

use super::{SsmParams, StepParams};
use crate::config::{ConfigValue, Configurable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmPreset {
    LocalLevel,
    LevelTrend,
    Seasonal { season_length: usize },
}

impl SsmPreset {
    pub fn validate(&self) -> Result<()> {
        if let SsmPreset::Seasonal { season_length } = self {
            if *season_length < 2 {
                return Err(Error::validation("seasonal preset requires season_length >= 2"));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            SsmPreset::LocalLevel => 1,
            SsmPreset::LevelTrend => 2,
            SsmPreset::Seasonal { season_length } => *season_length,
        }
    }

    /// Number of innovation strengths (one per structural component).
    pub fn innovation_count(&self) -> usize {
        match self {
            SsmPreset::LocalLevel => 1,
            SsmPreset::LevelTrend | SsmPreset::Seasonal { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SsmPreset::LocalLevel => "local_level",
            SsmPreset::LevelTrend => "level_trend",
            SsmPreset::Seasonal { .. } => "seasonal",
        }
    }

    pub fn parse(name: &str, season_length: usize) -> Result<Self> {
        let preset = match name {
            "local_level" => SsmPreset::LocalLevel,
            "level_trend" => SsmPreset::LevelTrend,
            "seasonal" => SsmPreset::Seasonal { season_length },
            other => return Err(Error::validation(format!("unknown ssm preset '{other}'"))),
        };
        preset.validate()?;
        Ok(preset)
    }

    /// Expand free parameters into a time-invariant parameter sequence of
    /// length `len`.
    pub fn expand(&self, params: &PresetParams, len: usize) -> Result<SsmParams> {
        self.validate()?;
        params.check(self)?;
        let dim = self.latent_dim();

        let (transition, innovation, emission) = match self {
            SsmPreset::LocalLevel => (
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_row_slice(&[params.innovations[0]]),
                DVector::from_row_slice(&[1.0]),
            ),
            SsmPreset::LevelTrend => (
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
                DVector::from_row_slice(&[params.innovations[0], params.innovations[1]]),
                DVector::from_row_slice(&[1.0, 0.0]),
            ),
            SsmPreset::Seasonal { season_length } => {
                let s = *season_length;
                let mut f = DMatrix::zeros(dim, dim);
                f[(0, 0)] = 1.0; // level
                for j in 1..s {
                    f[(1, j)] = -1.0; // newest seasonal effect
                }
                for j in 2..s {
                    f[(j, j - 1)] = 1.0; // shift older effects
                }
                let mut g = DVector::zeros(dim);
                g[0] = params.innovations[0];
                g[1] = params.innovations[1];
                let mut a = DVector::zeros(dim);
                a[0] = 1.0;
                a[1] = 1.0;
                (f, g, a)
            }
        };

        SsmParams::time_invariant(
            DVector::from_row_slice(&params.prior_mean),
            DVector::from_element(dim, params.prior_scale),
            StepParams {
                transition,
                innovation,
                emission,
                offset: 0.0,
                obs_noise: params.obs_noise,
            },
            len,
        )
    }

    /// Data-driven starting point for maximum-likelihood fitting.
    pub fn initial_params(&self, z: &[Option<f64>]) -> Result<PresetParams> {
        self.validate()?;
        let observed: Vec<f64> = z.iter().filter_map(|v| *v).collect();
        if observed.is_empty() {
            return Err(Error::validation("initialization requires at least one observed value"));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let sd_diff = if observed.len() > 1 {
            let diffs: Vec<f64> = observed.windows(2).map(|w| w[1] - w[0]).collect();
            let dm = diffs.iter().sum::<f64>() / diffs.len() as f64;
            (diffs.iter().map(|d| (d - dm) * (d - dm)).sum::<f64>() / diffs.len() as f64).sqrt()
        } else {
            0.0
        };
        let scale = sd_diff.max(1e-3);

        let mut prior_mean = vec![0.0; self.latent_dim()];
        prior_mean[0] = match self {
            SsmPreset::LevelTrend | SsmPreset::LocalLevel => observed[0],
            SsmPreset::Seasonal { .. } => mean,
        };
        match self {
            SsmPreset::LocalLevel => {}
            SsmPreset::LevelTrend => {
                prior_mean[1] = if observed.len() > 1 {
                    (observed[observed.len() - 1] - observed[0]) / (observed.len() - 1) as f64
                } else {
                    0.0
                };
            }
            SsmPreset::Seasonal { season_length } => {
                let s = *season_length;
                // Per-phase mean deviations from the global mean, arranged so
                // the rotation reproduces them in order: slot 1 holds phase
                // 0's effect, slot j >= 2 holds phase (s + 1 - j)'s.
                let mut phase_sum = vec![0.0f64; s];
                let mut phase_count = vec![0usize; s];
                for (i, v) in z.iter().enumerate() {
                    if let Some(v) = v {
                        phase_sum[i % s] += v - mean;
                        phase_count[i % s] += 1;
                    }
                }
                let dev = |p: usize| {
                    if phase_count[p] > 0 {
                        phase_sum[p] / phase_count[p] as f64
                    } else {
                        0.0
                    }
                };
                prior_mean[1] = dev(0);
                for j in 2..s {
                    prior_mean[j] = dev(s + 1 - j);
                }
            }
        }

        Ok(PresetParams {
            obs_noise: 0.5 * scale,
            innovations: vec![0.2 * scale; self.innovation_count()],
            prior_mean,
            prior_scale: scale.max(observed.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)),
        })
    }
}

/// Free parameters θ of a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub obs_noise: f64,
    pub innovations: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_scale: f64,
}

impl PresetParams {
    fn check(&self, preset: &SsmPreset) -> Result<()> {
        if self.innovations.len() != preset.innovation_count() {
            return Err(Error::validation(format!(
                "{} expects {} innovation strengths, got {}",
                preset.name(),
                preset.innovation_count(),
                self.innovations.len()
            )));
        }
        if self.prior_mean.len() != preset.latent_dim() {
            return Err(Error::validation(format!(
                "{} expects prior mean of length {}, got {}",
                preset.name(),
                preset.latent_dim(),
                self.prior_mean.len()
            )));
        }
        if !(self.obs_noise >= 0.0) || !(self.prior_scale >= 0.0) {
            return Err(Error::validation("obs_noise and prior_scale must be >= 0"));
        }
        Ok(())
    }
}

impl Configurable for SsmPreset {
    fn to_config(&self) -> ConfigValue {
        let season = match self {
            SsmPreset::Seasonal { season_length } => *season_length as i64,
            _ => 0,
        };
        ConfigValue::call(
            "SsmPreset",
            vec![
                ("kind", ConfigValue::str(self.name())),
                ("season_length", ConfigValue::Int(season)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        SsmPreset::parse(
            value.get("kind")?.as_str()?,
            value.get("season_length")?.as_usize()?.max(2),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::kalman_filter;

    #[test]
    fn seasonal_rotation_reproduces_phase_pattern() {
        // With zero noise the expanded model must emit the seasonal pattern
        // exactly, period 4.
        let preset = SsmPreset::Seasonal { season_length: 4 };
        let devs = [1.5, -0.5, -2.0, 1.0]; // sums to zero
        let params = PresetParams {
            obs_noise: 0.0,
            innovations: vec![0.0, 0.0],
            prior_mean: vec![10.0, devs[0], devs[3], devs[2]],
            prior_scale: 0.0,
        };
        let ssm = preset.expand(&params, 8).unwrap();
        let z: Vec<Option<f64>> = (0..8).map(|i| Some(10.0 + devs[i % 4])).collect();
        // Deterministic consistent observations: the filter accepts them.
        let result = kalman_filter(&ssm, &z).unwrap();
        assert_eq!(result.log_likelihood, 0.0);
    }

    #[test]
    fn preset_dimensions() {
        assert_eq!(SsmPreset::LocalLevel.latent_dim(), 1);
        assert_eq!(SsmPreset::LevelTrend.latent_dim(), 2);
        assert_eq!(SsmPreset::Seasonal { season_length: 7 }.latent_dim(), 7);
        assert!(SsmPreset::Seasonal { season_length: 1 }.validate().is_err());
    }

    #[test]
    fn level_trend_extrapolates_linearly() {
        let preset = SsmPreset::LevelTrend;
        let params = PresetParams {
            obs_noise: 0.0,
            innovations: vec![0.0, 0.0],
            prior_mean: vec![1.0, 2.0],
            prior_scale: 0.0,
        };
        let ssm = preset.expand(&params, 4).unwrap();
        // Observation sees the previous state's level: 1, 3, 5, 7.
        let z: Vec<Option<f64>> = (0..4).map(|i| Some(1.0 + 2.0 * i as f64)).collect();
        assert!(kalman_filter(&ssm, &z).is_ok());
        // A wrong slope is inconsistent with the deterministic model.
        let bad: Vec<Option<f64>> = (0..4).map(|i| Some(1.0 + 2.5 * i as f64)).collect();
        assert!(kalman_filter(&ssm, &bad).is_err());
    }

    #[test]
    fn initial_params_track_data_scale() {
        let z: Vec<Option<f64>> = (0..50).map(|i| Some(100.0 + (i as f64 * 0.5).sin())).collect();
        let init = SsmPreset::LocalLevel.initial_params(&z).unwrap();
        assert!((init.prior_mean[0] - z[0].unwrap()).abs() < 1e-12);
        assert!(init.obs_noise > 0.0 && init.obs_noise < 2.0);
    }
}
