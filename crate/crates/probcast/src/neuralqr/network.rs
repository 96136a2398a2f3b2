//! Dense feedforward stack with hand-rolled backpropagation.
//!
//! Hidden layers apply the configured activation; the output layer is
//! linear. Gradients are exact subgradients of the pinball training loss
//! (ties contribute zero, so a perfectly fitted point moves nothing).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// One dense layer, row-major `rows x cols` weights plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer { weights: vec![0.0; rows * cols], bias: vec![0.0; rows], rows, cols }
    }
}

/// Parameters of the full stack.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl MlpParameters {
    /// Seeded initialization: weights uniform in ±1/sqrt(fan_in), zero biases.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::validation("network needs at least input and output dimensions"));
        }
        if dims.iter().any(|d| *d == 0) {
            return Err(Error::validation("layer dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let bound = 1.0 / (cols as f64).sqrt();
            let weights = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(Layer { weights, bias: vec![0.0; rows], rows, cols });
        }
        Ok(MlpParameters { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        MlpParameters {
            layers: self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Visit every parameter of `self` alongside the same position in up to
    /// two companion parameter sets (used by the optimizer state updates).
    pub fn zip_apply(&mut self, a: &MlpParameters, b: &MlpParameters, mut f: impl FnMut(&mut f64, f64, f64)) {
        for ((l, la), lb) in self.layers.iter_mut().zip(&a.layers).zip(&b.layers) {
            for ((w, wa), wb) in l.weights.iter_mut().zip(&la.weights).zip(&lb.weights) {
                f(w, *wa, *wb);
            }
            for ((v, va), vb) in l.bias.iter_mut().zip(&la.bias).zip(&lb.bias) {
                f(v, *va, *vb);
            }
        }
    }

    pub fn for_each_param(&self, mut f: impl FnMut(f64)) {
        for l in &self.layers {
            for w in &l.weights {
                f(*w);
            }
            for b in &l.bias {
                f(*b);
            }
        }
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for w in &mut l.weights {
                f(w);
            }
            for b in &mut l.bias {
                f(b);
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Forward pass keeping per-layer pre-activations and activations for
    /// the backward pass. `caches.activations[0]` is the input.
    pub fn forward_cached(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::validation(format!(
                "network input has length {}, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("network input must be finite"));
        }
        let n_layers = self.layers.len();
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut preactivations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());

        for (idx, layer) in self.layers.iter().enumerate() {
            let prev = &activations[idx];
            let mut pre = layer.bias.clone();
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(prev) {
                    acc += w * x;
                }
                pre[r] += acc;
            }
            let is_output = idx == n_layers - 1;
            let act = if is_output {
                pre.clone()
            } else {
                pre.iter().map(|v| self.activation.apply(*v)).collect()
            };
            preactivations.push(pre);
            activations.push(act);
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardCache { activations, preactivations }))
    }

    /// Backpropagate `grad_output` (dLoss/dOutput) through the cached pass,
    /// accumulating parameter gradients into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut MlpParameters) {
        let n_layers = self.layers.len();
        let mut delta: Vec<f64> = grad_output.to_vec();
        for idx in (0..n_layers).rev() {
            let layer = &self.layers[idx];
            if idx < n_layers - 1 {
                for (d, pre) in delta.iter_mut().zip(&cache.preactivations[idx]) {
                    *d *= self.activation.derivative(*pre);
                }
            }
            let input = &cache.activations[idx];
            let glayer = &mut grads.layers[idx];
            for r in 0..layer.rows {
                glayer.bias[r] += delta[r];
                let grow = &mut glayer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (g, x) in grow.iter_mut().zip(input) {
                    *g += delta[r] * x;
                }
            }
            if idx > 0 {
                let mut next = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += delta[r] * w;
                    }
                }
                delta = next;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
    pub preactivations: Vec<Vec<f64>>,
}

/// Pinball (quantile) loss: `(z - ẑ)·q` when under-forecasting,
/// `(ẑ - z)·(1-q)` when over-forecasting.
pub fn pinball_loss(z: f64, z_hat: f64, q: f64) -> f64 {
    if z >= z_hat {
        (z - z_hat) * q
    } else {
        (z_hat - z) * (1.0 - q)
    }
}

/// Subgradient of the pinball loss in its second argument; zero at ties.
pub fn pinball_grad(z: f64, z_hat: f64, q: f64) -> f64 {
    if z > z_hat {
        -q
    } else if z < z_hat {
        1.0 - q
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_known_values() {
        assert_eq!(pinball_loss(1.0, 0.0, 0.5), 0.5);
        assert!((pinball_loss(0.0, 1.0, 0.9) - 0.1).abs() < 1e-15);
        assert!((pinball_loss(1.0, 0.0, 0.9) - 0.9).abs() < 1e-15);
        for q in [0.1, 0.5, 0.9] {
            assert_eq!(pinball_loss(2.0, 2.0, q), 0.0);
            assert_eq!(pinball_grad(2.0, 2.0, q), 0.0);
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = MlpParameters::init(&[3, 4, 2], Activation::Relu, 0).unwrap();
        net.for_each_param_mut(|p| *p = 0.0);
        let out = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // Hidden layer: identity-ish weights with relu; output sums the
        // hidden units.
        let net = MlpParameters {
            layers: vec![
                Layer { weights: vec![1.0, 0.0, 0.0, 1.0], bias: vec![0.5, -0.5], rows: 2, cols: 2 },
                Layer { weights: vec![1.0, 1.0], bias: vec![0.25], rows: 1, cols: 2 },
            ],
            activation: Activation::Relu,
        };
        // input [1, -1]: pre = [1.5, -1.5], relu = [1.5, 0], out = 1.5 + 0.25.
        let out = net.forward(&[1.0, -1.0]).unwrap();
        assert_eq!(out, vec![1.75]);
    }

    #[test]
    fn output_shape_matches_layer_spec() {
        let net = MlpParameters::init(&[30, 40, 40, 40, 14 * 9], Activation::Relu, 1).unwrap();
        let out = net.forward(&vec![0.1; 30]).unwrap();
        assert_eq!(out.len(), 14 * 9);
        assert!(net.forward(&vec![0.0; 29]).is_err());
    }

    #[test]
    fn deterministic_initialization() {
        let a = MlpParameters::init(&[5, 8, 3], Activation::Tanh, 42).unwrap();
        let b = MlpParameters::init(&[5, 8, 3], Activation::Tanh, 42).unwrap();
        let c = MlpParameters::init(&[5, 8, 3], Activation::Tanh, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn backward_matches_finite_differences_on_smooth_activation() {
        // Tanh avoids kinks entirely, so plain central differences apply.
        let net = MlpParameters::init(&[3, 4, 2], Activation::Tanh, 7).unwrap();
        let input = [0.3, -0.7, 1.1];
        let target = [0.5, -0.2];
        let loss_of = |p: &MlpParameters| -> f64 {
            let out = p.forward(&input).unwrap();
            out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum()
        };

        let (out, cache) = net.forward_cached(&input).unwrap();
        let grad_out: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        let mut grads = net.zeros_like();
        net.backward_into(&cache, &grad_out, &mut grads);

        let h = 1e-6;
        for layer_idx in 0..net.layers.len() {
            for w_idx in 0..net.layers[layer_idx].weights.len() {
                let mut plus = net.clone();
                plus.layers[layer_idx].weights[w_idx] += h;
                let mut minus = net.clone();
                minus.layers[layer_idx].weights[w_idx] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let analytic = grads.layers[layer_idx].weights[w_idx];
                assert!(
                    (fd - analytic).abs() <= 1e-6 * fd.abs().max(1.0),
                    "layer {layer_idx} w {w_idx}: fd {fd} analytic {analytic}"
                );
            }
        }
    }
}
