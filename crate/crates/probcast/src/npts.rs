//! Non-parametric time series forecaster.
//!
//! Each prediction samples a past time index with probability decaying
//! exponentially in the distance to the forecast step, then emits the value
//! observed there. α = 0 resamples history uniformly (the climatological
//! forecaster); α = ∞ always picks the most recent value (the naive
//! forecaster). Multi-step forecasts absorb their own predictions: step
//! `T+k` samples from the last `T` values of history extended by the path's
//! previous predictions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigValue, Configurable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Exponential,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NptsConfig {
    /// Decay rate; `f64::INFINITY` selects the naive limit symbolically.
    pub alpha: f64,
    /// Ignore `alpha` and pick it per series so the most recent season
    /// carries half of the total weight (see [`default_alpha`]).
    pub auto_alpha: bool,
    pub kernel: Kernel,
    /// Restrict candidate indices to the same seasonal phase as the target step.
    pub seasonal: bool,
    pub season_length: usize,
    pub num_sample_paths: usize,
}

impl Default for NptsConfig {
    fn default() -> Self {
        NptsConfig {
            alpha: 1.0,
            auto_alpha: false,
            kernel: Kernel::Exponential,
            seasonal: false,
            season_length: 1,
            num_sample_paths: 100,
        }
    }
}

impl NptsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.alpha.is_nan() {
            return Err(Error::validation(format!("npts alpha must be >= 0, got {}", self.alpha)));
        }
        if self.season_length == 0 {
            return Err(Error::validation("season_length must be >= 1"));
        }
        if self.num_sample_paths == 0 {
            return Err(Error::validation("num_sample_paths must be >= 1"));
        }
        Ok(())
    }

    /// The decay actually applied: a uniform kernel behaves as α = 0.
    pub fn effective_alpha(&self) -> f64 {
        match self.kernel {
            Kernel::Uniform => 0.0,
            Kernel::Exponential => self.alpha,
        }
    }
}

/// Sampling weights over history indices `0..len` for a forecast at step
/// `len`: `q(t) ∝ exp(-α·(len - t))`, normalized. α = 0 is exactly uniform;
/// α = ∞ is a point mass on the most recent index.
pub fn npts_weights(len: usize, alpha: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::validation("npts weights require at least one observation"));
    }
    if alpha < 0.0 || alpha.is_nan() {
        return Err(Error::validation(format!("npts alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(vec![1.0 / len as f64; len]);
    }
    if alpha.is_infinite() {
        let mut w = vec![0.0; len];
        w[len - 1] = 1.0;
        return Ok(w);
    }
    // Softmax over -α·distance, shifted by the largest exponent (-α).
    let mut weights: Vec<f64> = (0..len)
        .map(|t| (-alpha * (len - t) as f64 + alpha).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Default decay rate: the smallest α at which the most recent
/// `season_length` observations carry at least half of the total weight.
pub fn default_alpha(len: usize, season_length: usize) -> f64 {
    if len == 0 || season_length >= len {
        return 0.0;
    }
    let recent_mass = |alpha: f64| -> f64 {
        let w = npts_weights(len, alpha).expect("alpha >= 0");
        w[len - season_length..].iter().sum()
    };
    if recent_mass(0.0) >= 0.5 {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while recent_mass(hi) < 0.5 {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if recent_mass(mid) >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Sample forecast paths for `horizon` steps. Missing values never become
/// candidates; each path absorbs its own predictions into the sliding
/// window of the `T` most recent values.
pub fn npts_forecast(
    target: &[Option<f64>],
    config: &NptsConfig,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    if horizon == 0 {
        return Err(Error::validation("horizon must be >= 1"));
    }
    let len = target.len();
    if len == 0 || target.iter().all(|v| v.is_none()) {
        return Err(Error::validation("npts requires at least one observed value"));
    }
    let alpha = if config.auto_alpha {
        let observed = target.iter().filter(|v| v.is_some()).count();
        default_alpha(observed, config.season_length)
    } else {
        config.effective_alpha()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::with_capacity(config.num_sample_paths);

    for _ in 0..config.num_sample_paths {
        // Sliding window of the last `len` values; None marks positions that
        // were missing in the original history.
        let mut window: Vec<Option<f64>> = target.to_vec();
        let mut path = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let step_index = len + k; // absolute index of the step being predicted
            let value = sample_step(&window, step_index, alpha, config, &mut rng)?;
            path.push(value);
            window.remove(0);
            window.push(Some(value));
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Draw one value from the window. `step_index` is the absolute position of
/// the predicted step; window slot `i` holds absolute index
/// `step_index - window.len() + i`.
fn sample_step<R: Rng + ?Sized>(
    window: &[Option<f64>],
    step_index: usize,
    alpha: f64,
    config: &NptsConfig,
    rng: &mut R,
) -> Result<f64> {
    let len = window.len();
    let offset = step_index - len;
    let candidate = |i: usize| -> Option<f64> {
        let v = window[i]?;
        if config.seasonal {
            let abs = offset + i;
            if abs % config.season_length != step_index % config.season_length {
                return None;
            }
        }
        Some(v)
    };

    if alpha.is_infinite() {
        // Most recent valid candidate, symbolically.
        for i in (0..len).rev() {
            if let Some(v) = candidate(i) {
                return Ok(v);
            }
        }
        return Err(Error::validation("npts candidate set is empty"));
    }

    let mut total = 0.0f64;
    let mut weights: Vec<(usize, f64)> = Vec::new();
    for i in 0..len {
        if candidate(i).is_some() {
            // distance from the predicted step; shift by α so the largest
            // exponent is 0 regardless of window size.
            let w = (-alpha * (len - i) as f64 + alpha).exp();
            weights.push((i, w));
            total += w;
        }
    }
    if weights.is_empty() || total <= 0.0 {
        return Err(Error::validation("npts candidate set is empty"));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, w) in &weights {
        cum += w;
        if u < cum {
            return Ok(window[*i].expect("candidate is observed"));
        }
    }
    let last = weights.last().unwrap().0;
    Ok(window[last].expect("candidate is observed"))
}

impl Configurable for NptsConfig {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "NptsEstimator",
            vec![
                ("alpha", ConfigValue::Float(self.alpha)),
                ("auto_alpha", ConfigValue::Bool(self.auto_alpha)),
                (
                    "kernel",
                    ConfigValue::str(match self.kernel {
                        Kernel::Exponential => "exponential",
                        Kernel::Uniform => "uniform",
                    }),
                ),
                ("seasonal", ConfigValue::Bool(self.seasonal)),
                ("season_length", ConfigValue::Int(self.season_length as i64)),
                ("num_sample_paths", ConfigValue::Int(self.num_sample_paths as i64)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        let kernel = match value.get("kernel")?.as_str()? {
            "exponential" => Kernel::Exponential,
            "uniform" => Kernel::Uniform,
            other => return Err(Error::config(format!("unknown npts kernel '{other}'"))),
        };
        let config = NptsConfig {
            alpha: value.get("alpha")?.as_f64()?,
            auto_alpha: value.get("auto_alpha")?.as_bool()?,
            kernel,
            seasonal: value.get("seasonal")?.as_bool()?,
            season_length: value.get("season_length")?.as_usize()?,
            num_sample_paths: value.get("num_sample_paths")?.as_usize()?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_at_alpha_zero() {
        let w = npts_weights(3, 0.0).unwrap();
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn exponential_weights_match_softmax() {
        let w = npts_weights(2, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn infinite_alpha_is_point_mass() {
        let w = npts_weights(5, f64::INFINITY).unwrap();
        assert_eq!(w, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn weights_sum_to_one_and_increase() {
        for alpha in [0.0, 0.1, 1.0, 5.0] {
            for len in [1usize, 2, 10, 100] {
                let w = npts_weights(len, alpha).unwrap();
                let total: f64 = w.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "alpha={alpha} len={len} total={total}");
                assert!(w.windows(2).all(|p| p[0] <= p[1] + 1e-15), "non-monotone at alpha={alpha}");
            }
        }
        assert!(npts_weights(3, -0.1).is_err());
    }

    #[test]
    fn recency_weight_grows_with_alpha() {
        let len = 50;
        let grid = [0.0, 0.01, 0.1, 0.5, 1.0, 3.0, f64::INFINITY];
        let mut last = 0.0;
        for alpha in grid {
            let w = npts_weights(len, alpha).unwrap();
            assert!(w[len - 1] >= last - 1e-15, "alpha={alpha}");
            last = w[len - 1];
        }
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let target = vec![Some(7.0); 6];
        let cfg = NptsConfig { alpha: 0.7, num_sample_paths: 20, ..NptsConfig::default() };
        let paths = npts_forecast(&target, &cfg, 4, 1).unwrap();
        assert!(paths.iter().all(|p| p.iter().all(|&v| v == 7.0)));
    }

    #[test]
    fn naive_limit_chains_last_value() {
        let target = vec![Some(1.0), Some(2.0), Some(3.0)];
        let cfg = NptsConfig { alpha: f64::INFINITY, num_sample_paths: 10, ..NptsConfig::default() };
        let paths = npts_forecast(&target, &cfg, 2, 9).unwrap();
        assert!(paths.iter().all(|p| p == &vec![3.0, 3.0]));
    }

    #[test]
    fn one_step_expectation_matches_weighted_mean() {
        let z = [2.0, 10.0];
        let target: Vec<Option<f64>> = z.iter().map(|v| Some(*v)).collect();
        let cfg = NptsConfig { alpha: 1.0, num_sample_paths: 100_000, ..NptsConfig::default() };
        let paths = npts_forecast(&target, &cfg, 1, 1234).unwrap();
        let mean: f64 = paths.iter().map(|p| p[0]).sum::<f64>() / paths.len() as f64;
        let w = npts_weights(2, 1.0).unwrap();
        let expected = w[0] * z[0] + w[1] * z[1];
        let bound = 3.0 * (z[1] - z[0]) / (paths.len() as f64).sqrt();
        assert!((mean - expected).abs() < bound, "mean {mean} expected {expected}");
    }

    #[test]
    fn missing_values_never_sampled() {
        let target = vec![Some(1.0), None, Some(3.0), None];
        let cfg = NptsConfig { alpha: 0.0, num_sample_paths: 50, ..NptsConfig::default() };
        let paths = npts_forecast(&target, &cfg, 3, 5).unwrap();
        for p in &paths {
            for v in p {
                assert!(*v == 1.0 || *v == 3.0, "sampled {v}");
            }
        }
    }

    #[test]
    fn all_missing_is_an_error() {
        let target = vec![None, None];
        let cfg = NptsConfig::default();
        assert!(npts_forecast(&target, &cfg, 1, 0).is_err());
    }

    #[test]
    fn seasonal_variant_respects_phase() {
        // Window size 6, season 2: step index 6 (even) must sample indices
        // 0, 2, 4 (values 10, 30, 50); step 7 samples odd indices.
        let target: Vec<Option<f64>> = [10.0, 21.0, 30.0, 41.0, 50.0, 61.0].iter().map(|v| Some(*v)).collect();
        let cfg = NptsConfig {
            alpha: 0.3,
            seasonal: true,
            season_length: 2,
            num_sample_paths: 200,
            ..NptsConfig::default()
        };
        let paths = npts_forecast(&target, &cfg, 2, 77).unwrap();
        for p in &paths {
            assert!(p[0] % 10.0 == 0.0, "even step sampled {}", p[0]);
            assert!(p[1] % 10.0 == 1.0, "odd step sampled {}", p[1]);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let target: Vec<Option<f64>> = (0..20).map(|v| Some(v as f64)).collect();
        let cfg = NptsConfig { alpha: 0.5, num_sample_paths: 7, ..NptsConfig::default() };
        let a = npts_forecast(&target, &cfg, 5, 42).unwrap();
        let b = npts_forecast(&target, &cfg, 5, 42).unwrap();
        let c = npts_forecast(&target, &cfg, 5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn default_alpha_puts_half_weight_on_recent_season() {
        let len = 100;
        let season = 10;
        let alpha = default_alpha(len, season);
        let w = npts_weights(len, alpha).unwrap();
        let recent: f64 = w[len - season..].iter().sum();
        assert!((recent - 0.5).abs() < 1e-6, "recent mass {recent}");
        // Short histories fall back to uniform.
        assert_eq!(default_alpha(5, 10), 0.0);
    }

    #[test]
    fn config_round_trip() {
        let cfg = NptsConfig {
            alpha: f64::INFINITY,
            auto_alpha: false,
            kernel: Kernel::Exponential,
            seasonal: true,
            season_length: 24,
            num_sample_paths: 100,
        };
        let text = cfg.to_config().render();
        let back = NptsConfig::from_config(&crate::config::parse(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
