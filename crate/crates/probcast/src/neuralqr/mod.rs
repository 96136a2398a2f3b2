//! Feedforward multi-horizon quantile regression.
//!
//! A dense stack maps the scaled context window directly to one quantile
//! value per (horizon step, level) pair and is trained on the mean pinball
//! loss with ADAM, gradient-norm clipping, and a halving learning-rate
//! schedule. Per-instance scaling divides inputs and targets by
//! `1 + mean |past|` over observed points; predictions are rescaled at
//! inference and sorted per step so quantiles never cross.

mod network;

pub use network::{pinball_loss, pinball_grad, Activation, ForwardCache, Layer, MlpParameters};

use std::io::{Read, Write};
use std::path::Path;

use crate::config::{derive_seed, ConfigValue, Configurable};
use crate::dataset::{Dataset, TimeSeriesRecord};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::transform::{InstanceSplitter, SplitMode, TrainingInstance};

/// Expected training windows per series per pass over the dataset.
const INSTANCES_PER_SERIES: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpQrConfig {
    pub context_length: usize,
    pub prediction_length: usize,
    pub hidden_cells: Vec<usize>,
    pub activation: Activation,
    pub quantiles: Vec<f64>,
}

impl MlpQrConfig {
    pub fn new(prediction_length: usize) -> Self {
        MlpQrConfig {
            context_length: 30,
            prediction_length,
            hidden_cells: vec![40, 40, 40],
            activation: Activation::Relu,
            quantiles: default_quantiles(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_length == 0 || self.prediction_length == 0 {
            return Err(Error::validation("context_length and prediction_length must be >= 1"));
        }
        if self.hidden_cells.iter().any(|c| *c == 0) {
            return Err(Error::validation("hidden cell counts must be positive"));
        }
        if self.quantiles.is_empty()
            || self.quantiles.windows(2).any(|w| !(w[0] < w[1]))
            || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0))
        {
            return Err(Error::validation("quantiles must be strictly ascending within (0, 1)"));
        }
        Ok(())
    }

    /// Layer widths, input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_cells.len() + 2);
        dims.push(self.context_length);
        dims.extend_from_slice(&self.hidden_cells);
        dims.push(self.prediction_length * self.quantiles.len());
        dims
    }
}

pub fn default_quantiles() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// ADAM training regimen: fixed batch count, learning rate halved after a
/// patience window without loss improvement, gradient norm clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub num_batches: usize,
    pub initial_lr: f64,
    pub lr_halving_patience: usize,
    pub min_lr: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            batch_size: 32,
            num_batches: 5000,
            initial_lr: 1e-3,
            lr_halving_patience: 300,
            min_lr: 5e-5,
            gradient_clip_norm: 10.0,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.num_batches == 0 || self.lr_halving_patience == 0 {
            return Err(Error::validation("batch_size, num_batches, lr_halving_patience must be positive"));
        }
        if !(self.initial_lr > 0.0) || !(self.min_lr > 0.0) || self.min_lr > self.initial_lr {
            return Err(Error::validation("learning rates must be positive with min_lr <= initial_lr"));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(Error::validation("gradient_clip_norm must be positive"));
        }
        Ok(())
    }
}

/// Scale `1 + mean |past|` over observed, non-padded points.
fn instance_scale(instance: &TrainingInstance) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for ((v, obs), pad) in instance.past_target.iter().zip(&instance.past_observed).zip(&instance.past_is_pad) {
        if *obs > 0.5 && *pad < 0.5 {
            total += v.abs();
            count += 1.0;
        }
    }
    if count > 0.0 {
        1.0 + total / count
    } else {
        1.0
    }
}

/// Mean pinball loss of one scaled instance and its gradient accumulated
/// into `grads` (both divided by `denom`, the batch-mean normalizer).
fn accumulate_instance(
    params: &MlpParameters,
    quantiles: &[f64],
    input: &[f64],
    target: &[f64],
    denom: f64,
    grads: &mut MlpParameters,
) -> Result<f64> {
    let k = quantiles.len();
    let (output, cache) = params.forward_cached(input)?;
    let per_term = 1.0 / (target.len() as f64 * k as f64) / denom;
    let mut loss = 0.0;
    let mut grad_out = vec![0.0; output.len()];
    for (step, z) in target.iter().enumerate() {
        for (j, q) in quantiles.iter().enumerate() {
            let z_hat = output[step * k + j];
            loss += pinball_loss(*z, z_hat, *q) * per_term;
            grad_out[step * k + j] = pinball_grad(*z, z_hat, *q) * per_term;
        }
    }
    params.backward_into(&cache, &grad_out, grads);
    Ok(loss)
}

struct AdamState {
    m: MlpParameters,
    v: MlpParameters,
    t: u64,
}

impl AdamState {
    fn new(shape: &MlpParameters) -> Self {
        AdamState { m: shape.zeros_like(), v: shape.zeros_like(), t: 0 }
    }

    fn step(&mut self, params: &mut MlpParameters, grads: &MlpParameters, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        self.m.zip_apply(grads, grads, |m, g, _| *m = BETA1 * *m + (1.0 - BETA1) * g);
        self.v.zip_apply(grads, grads, |v, g, _| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
        params.zip_apply(&self.m, &self.v, |p, m, v| {
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        });
    }
}

fn clip_gradients(grads: &mut MlpParameters, max_norm: f64) {
    let mut sq = 0.0;
    grads.for_each_param(|g| sq += g * g);
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.for_each_param_mut(|g| *g *= scale);
    }
}

/// Outcome of a training run: fitted parameters plus the per-batch loss
/// trace (used by convergence diagnostics and tests).
#[derive(Debug, Clone)]
pub struct TrainedMlp {
    pub params: MlpParameters,
    pub loss_history: Vec<f64>,
}

/// Train on all records of `data` with the configured regimen. Instances
/// are resampled from the series on every pass with a seeded sampler, so
/// the whole run is deterministic in (seed, data).
pub fn train(config: &MlpQrConfig, trainer: &TrainerConfig, data: &dyn Dataset) -> Result<TrainedMlp> {
    config.validate()?;
    trainer.validate()?;
    let records: Vec<TimeSeriesRecord> = data.iter()?.collect::<Result<_>>()?;
    if records.is_empty() {
        return Err(Error::validation("training requires at least one series"));
    }

    let mut params = MlpParameters::init(&config.dims(), config.activation, derive_seed(trainer.seed, "mlp-init"))?;
    let mut adam = AdamState::new(&params);
    let mut splitter = InstanceSplitter::new(
        config.context_length,
        config.prediction_length,
        SplitMode::Train { num_instances: INSTANCES_PER_SERIES },
        derive_seed(trainer.seed, "instance-sampler"),
    )?;

    let mut lr = trainer.initial_lr;
    let mut best_loss = f64::INFINITY;
    let mut stale_batches = 0usize;
    let mut loss_history = Vec::with_capacity(trainer.num_batches);

    let mut pending: Vec<TrainingInstance> = Vec::new();
    let mut batches_done = 0usize;
    while batches_done < trainer.num_batches {
        // Refill the instance buffer with full passes over the dataset. A
        // pass may randomly yield nothing; only series that are all too
        // short to ever split are fatal.
        let mut empty_passes = 0usize;
        while pending.len() < trainer.batch_size {
            let before = pending.len();
            let skipped_before = splitter.skipped();
            for record in &records {
                pending.extend(splitter.split_record(record)?);
            }
            if pending.len() == before {
                if splitter.skipped() - skipped_before == records.len() as u64 {
                    return Err(Error::validation(
                        "training produced no instances (all series shorter than the prediction length)",
                    ));
                }
                empty_passes += 1;
                if empty_passes > 10_000 {
                    return Err(Error::validation("instance sampler yielded nothing across many passes"));
                }
            } else {
                empty_passes = 0;
            }
        }
        let batch: Vec<TrainingInstance> = pending.drain(..trainer.batch_size).collect();

        let mut grads = params.zeros_like();
        let mut batch_loss = 0.0;
        let denom = batch.len() as f64;
        for instance in &batch {
            let scale = instance_scale(instance);
            let input: Vec<f64> = instance.past_target.iter().map(|v| v / scale).collect();
            let target: Vec<f64> = instance.future_target.iter().map(|v| v / scale).collect();
            batch_loss += accumulate_instance(&params, &config.quantiles, &input, &target, denom, &mut grads)?;
        }
        if !batch_loss.is_finite() {
            return Err(Error::numerics(Some(batches_done), format!("non-finite training loss at batch {batches_done}")));
        }

        clip_gradients(&mut grads, trainer.gradient_clip_norm);
        adam.step(&mut params, &grads, lr);
        loss_history.push(batch_loss);
        batches_done += 1;

        // Halve the rate after `patience` batches without relative
        // improvement of the best loss; the counter resets on halving.
        if batch_loss < best_loss * (1.0 - 1e-6) {
            best_loss = batch_loss;
            stale_batches = 0;
        } else {
            stale_batches += 1;
            if stale_batches >= trainer.lr_halving_patience {
                lr = (lr * 0.5).max(trainer.min_lr);
                stale_batches = 0;
            }
        }
    }

    Ok(TrainedMlp { params, loss_history })
}

/// Quantile forecast for one record: scaled context tail through the
/// network, rescaled, per-step outputs sorted across levels.
pub fn predict(params: &MlpParameters, config: &MlpQrConfig, record: &TimeSeriesRecord) -> Result<Forecast> {
    let mut splitter = InstanceSplitter::new(config.context_length, config.prediction_length, SplitMode::Test, 0)?;
    let instance = splitter
        .split_record(record)?
        .pop()
        .expect("test-mode split yields one instance");
    let scale = instance_scale(&instance);
    let input: Vec<f64> = instance.past_target.iter().map(|v| v / scale).collect();
    let output = params.forward(&input)?;

    let k = config.quantiles.len();
    let mut rows = Vec::with_capacity(config.prediction_length);
    for step in 0..config.prediction_length {
        let mut row: Vec<f64> = (0..k).map(|j| output[step * k + j] * scale).collect();
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(row);
    }
    Forecast::quantile_grid(
        record.item_id.clone(),
        instance.forecast_start,
        record.freq,
        config.quantiles.clone(),
        rows,
    )
}

// ---------------------------------------------------------------------------
// Model files

const MODEL_MAGIC: &[u8; 8] = b"PCQRMLP1";

/// Write parameters as a flat binary tensor file: magic, layer count, then
/// per layer its shape followed by row-major weights and bias as f64 LE.
pub fn save_parameters(params: &MlpParameters, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        buf.extend_from_slice(&(layer.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.cols as u32).to_le_bytes());
        for w in &layer.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_parameters(path: &Path, activation: Activation) -> Result<MlpParameters> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::validation(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(fail("not a model parameter file"));
    }
    let mut pos = 8usize;
    let read_u32 = |bytes: &[u8], pos: &mut usize| -> Result<u32> {
        if *pos + 4 > bytes.len() {
            return Err(fail("truncated model file"));
        }
        let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        Ok(v)
    };
    let n_layers = read_u32(&bytes, &mut pos)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(&bytes, &mut pos)? as usize;
        let cols = read_u32(&bytes, &mut pos)? as usize;
        let need = (rows * cols + rows) * 8;
        if pos + need > bytes.len() {
            return Err(fail("truncated model file"));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()));
            pos += 8;
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()));
            pos += 8;
        }
        layers.push(Layer { weights, bias, rows, cols });
    }
    if pos != bytes.len() {
        return Err(fail("trailing bytes in model file"));
    }
    if layers.is_empty() {
        return Err(fail("model file has no layers"));
    }
    Ok(MlpParameters { layers, activation })
}

impl Configurable for MlpQrConfig {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "MlpQrConfig",
            vec![
                ("context_length", ConfigValue::Int(self.context_length as i64)),
                ("prediction_length", ConfigValue::Int(self.prediction_length as i64)),
                (
                    "hidden_cells",
                    ConfigValue::List(self.hidden_cells.iter().map(|c| ConfigValue::Int(*c as i64)).collect()),
                ),
                (
                    "activation",
                    ConfigValue::str(match self.activation {
                        Activation::Relu => "relu",
                        Activation::Tanh => "tanh",
                    }),
                ),
                ("quantiles", ConfigValue::float_list(&self.quantiles)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        let activation = match value.get("activation")?.as_str()? {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => return Err(Error::config(format!("unknown activation '{other}'"))),
        };
        let config = MlpQrConfig {
            context_length: value.get("context_length")?.as_usize()?,
            prediction_length: value.get("prediction_length")?.as_usize()?,
            hidden_cells: value.get("hidden_cells")?.as_usize_list()?,
            activation,
            quantiles: value.get("quantiles")?.as_f64_list()?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl Configurable for TrainerConfig {
    fn to_config(&self) -> ConfigValue {
        ConfigValue::call(
            "TrainerConfig",
            vec![
                ("batch_size", ConfigValue::Int(self.batch_size as i64)),
                ("num_batches", ConfigValue::Int(self.num_batches as i64)),
                ("initial_lr", ConfigValue::Float(self.initial_lr)),
                ("lr_halving_patience", ConfigValue::Int(self.lr_halving_patience as i64)),
                ("min_lr", ConfigValue::Float(self.min_lr)),
                ("gradient_clip_norm", ConfigValue::Float(self.gradient_clip_norm)),
                ("seed", ConfigValue::Int(self.seed as i64)),
            ],
        )
    }

    fn from_config(value: &ConfigValue) -> Result<Self> {
        let config = TrainerConfig {
            batch_size: value.get("batch_size")?.as_usize()?,
            num_batches: value.get("num_batches")?.as_usize()?,
            initial_lr: value.get("initial_lr")?.as_f64()?,
            lr_halving_patience: value.get("lr_halving_patience")?.as_usize()?,
            min_lr: value.get("min_lr")?.as_f64()?,
            gradient_clip_norm: value.get("gradient_clip_norm")?.as_f64()?,
            seed: value.get("seed")?.as_u64()?,
        };
        config.validate()?;
        Ok(config)
    }
}
