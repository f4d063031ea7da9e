//! Dense feedforward networks with exact reverse-mode gradients and an Adam
//! optimizer. Batches are row-major: one sample per row.
//!
//! # Checkpoint layout
//!
//! All integers and floats little-endian.
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `DRBNET\0\0` |
//! | 4 | format version (`u32`, currently 1) |
//! | 4 | layer count `L` (`u32`) |
//! | 9·L | per layer: fan-in `u32`, fan-out `u32`, activation `u8` (0 identity, 1 relu, 2 tanh) |
//! | ... | per layer: weights `fan_in × fan_out` `f64` in row-major order, then `fan_out` bias `f64` |

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DRBNET\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input width {got} does not match network input {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forward cache is stale: network changed since the forward pass")]
    StaleCache,
    #[error("non-finite gradient in layer {layer} {part}")]
    NonFiniteGradient { layer: usize, part: &'static str },
    #[error("gradient shapes do not match the network")]
    ShapeMismatch,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, NnError> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            c => Err(NnError::BadCheckpoint(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Shape and initialization of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Final layer drawn from `U(-s, s)` instead of fan-in scaling.
    pub final_layer_scale: Option<f64>,
}

impl NetworkSpec {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(self.input);
        s.extend(&self.hidden);
        s.push(self.output);
        s
    }

    pub fn param_count(&self) -> usize {
        self.sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
    version: u64,
}

/// Activations recorded by a forward pass, tied to the parameter version
/// that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&x| x == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }
}

impl DenseNetwork {
    pub fn new<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let sizes = spec.sizes();
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let last = l + 1 == n;
                let bound = match (last, spec.final_layer_scale) {
                    (true, Some(s)) => s,
                    _ => 1.0 / (fan_in as f64).sqrt(),
                };
                let mut draw = || if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| draw());
                let bias = Array1::from_shape_fn(fan_out, |_| draw());
                let activation = if last { spec.output_activation } else { spec.hidden_activation };
                Layer { weights, bias, activation }
            })
            .collect();
        Self { layers, version: 0 }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers, version: 0 }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map(|l| l.fan_out()).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.fan_out()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    fn check_input(&self, width: usize) -> Result<(), NnError> {
        if width != self.input_len() {
            return Err(NnError::DimensionMismatch { expected: self.input_len(), got: width });
        }
        Ok(())
    }

    fn layer_forward(layer: &Layer, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        let act = layer.activation;
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        Ok(self.predict_batch(&x)?.into_raw_vec_and_offset().0)
    }

    /// Batch forward without keeping intermediate activations.
    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let mut h = Self::layer_forward(&self.layers[0], x);
        for layer in &self.layers[1..] {
            h = Self::layer_forward(layer, &h);
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<ForwardCache, NnError> {
        self.check_input(x.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = Self::layer_forward(layer, activations.last().expect("non-empty"));
            activations.push(next);
        }
        Ok(ForwardCache { version: self.version, activations })
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
        mut grads: Option<&mut Gradients>,
    ) -> Result<Array2<f64>, NnError> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(NnError::StaleCache);
        }
        if upstream.raw_dim() != cache.output().raw_dim() {
            return Err(NnError::ShapeMismatch);
        }
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.activations[l + 1];
            let act = layer.activation;
            if act != Activation::Identity {
                ndarray::Zip::from(&mut delta).and(y).for_each(|d, &y| *d *= act.derivative_from_output(y));
            }
            if let Some(g) = grads.as_deref_mut() {
                g.weights[l] = cache.activations[l].t().dot(&delta);
                g.biases[l] = delta.sum_axis(Axis(0));
            }
            delta = delta.dot(&layer.weights.t());
        }
        Ok(delta)
    }

    /// Parameter gradients and the gradient with respect to the input, for
    /// a scalar loss whose gradient with respect to the output is `upstream`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>), NnError> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backprop(cache, upstream, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Input gradient only, skipping parameter gradients.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
    ) -> Result<Array2<f64>, NnError> {
        self.backprop(cache, upstream, None)
    }

    /// `self ← tau·online + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, online: &DenseNetwork, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weights.zip_mut_with(&o.weights, |a, &b| *a = tau * b + (1.0 - tau) * *a);
            t.bias.zip_mut_with(&o.bias, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
        self.version += 1;
    }

    pub fn copy_params_from(&mut self, other: &DenseNetwork) {
        self.layers.clone_from(&other.layers);
        self.version += 1;
    }

    pub fn max_abs_diff(&self, other: &DenseNetwork) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| {
                a.weights
                    .iter()
                    .zip(b.weights.iter())
                    .chain(a.bias.iter().zip(b.bias.iter()))
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.fan_in() as u32).to_le_bytes())?;
            w.write_all(&(l.fan_out() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.param_count());
        self.write_checkpoint(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::BadCheckpoint("wrong magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if n == 0 || n > 1024 {
            return Err(NnError::BadCheckpoint(format!("layer count {n}")));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let fan_in = read_u32(&mut r)? as usize;
            let fan_out = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            shapes.push((fan_in, fan_out, Activation::from_code(code[0])?));
        }
        for pair in shapes.windows(2) {
            if pair[0].1 != pair[1].0 {
                return Err(NnError::BadCheckpoint("layer sizes do not chain".into()));
            }
        }
        let mut layers = Vec::with_capacity(n);
        for (fan_in, fan_out, activation) in shapes {
            let weights = read_f64s(&mut r, fan_in * fan_out)?;
            let bias = read_f64s(&mut r, fan_out)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((fan_in, fan_out), weights).expect("sized read"),
                bias: Array1::from(bias),
                activation,
            });
        }
        Ok(Self::from_layers(layers))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, NnError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl OptimizerState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        Self { config, step: 0, first: Gradients::zeros_like(net), second: Gradients::zeros_like(net) }
    }

    /// One bias-corrected Adam step that descends `grads`.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &Gradients) -> Result<(), NnError> {
        if grads.weights.len() != net.layers.len() || grads.biases.len() != net.layers.len() {
            return Err(NnError::ShapeMismatch);
        }
        for (l, layer) in net.layers.iter().enumerate() {
            if grads.weights[l].raw_dim() != layer.weights.raw_dim()
                || grads.biases[l].raw_dim() != layer.bias.raw_dim()
            {
                return Err(NnError::ShapeMismatch);
            }
            if !grads.weights[l].iter().all(|g| g.is_finite()) {
                return Err(NnError::NonFiniteGradient { layer: l, part: "weights" });
            }
            if !grads.biases[l].iter().all(|g| g.is_finite()) {
                return Err(NnError::NonFiniteGradient { layer: l, part: "bias" });
            }
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut self.first.weights[l])
                .and(&mut self.second.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut self.first.biases[l])
                .and(&mut self.second.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        net.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::seeded_rng;

    fn spec(input: usize, hidden: &[usize], output: usize, out_act: Activation) -> NetworkSpec {
        NetworkSpec {
            input,
            hidden: hidden.to_vec(),
            output,
            hidden_activation: Activation::Relu,
            output_activation: out_act,
            final_layer_scale: None,
        }
    }

    #[test]
    fn zero_network_squashes_to_zero() {
        let mut net = DenseNetwork::new(&spec(3, &[4], 1, Activation::Tanh), &mut seeded_rng(0, 0));
        for l in net.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn one_by_one_network_is_its_activation() {
        for act in [Activation::Tanh, Activation::Relu, Activation::Identity] {
            let net = DenseNetwork::from_layers(vec![Layer {
                weights: Array2::from_elem((1, 1), 1.0),
                bias: Array1::zeros(1),
                activation: act,
            }]);
            for x in [-2.0, -0.3, 0.0, 0.7, 5.0] {
                assert_eq!(net.forward(&[x]).unwrap()[0], act.apply(x));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = DenseNetwork::new(&spec(3, &[4], 1, Activation::Identity), &mut seeded_rng(0, 0));
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(NnError::DimensionMismatch { expected: 3, got: 2 })));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = DenseNetwork::new(&spec(2, &[3], 1, Activation::Identity), &mut seeded_rng(0, 0));
        let x = Array2::from_elem((2, 2), 0.5);
        let cache = net.forward_batch(&x).unwrap();
        let other = net.clone();
        net.soft_update_from(&other, 0.5);
        assert!(matches!(net.backward(&cache, &Array2::ones((2, 1))), Err(NnError::StaleCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = DenseNetwork::new(&spec(4, &[5, 3], 2, Activation::Tanh), &mut seeded_rng(1, 0));
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let cache = net.forward_batch(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Array2::zeros((3, 2))).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn documented_parameter_count() {
        let s = spec(20, &[300, 600, 400, 200], 1, Activation::Tanh);
        // 20·300+300 + 300·600+600 + 600·400+400 + 400·200+200 + 200·1+1
        assert_eq!(s.param_count(), 507_701);
        let critic = spec(21, &[300, 600, 400, 200], 1, Activation::Identity);
        assert_eq!(critic.param_count(), 508_001);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut net = DenseNetwork::new(&spec(3, &[4], 1, Activation::Identity), &mut seeded_rng(2, 0));
        let before = net.clone();
        let mut opt = OptimizerState::new(&net, AdamConfig::with_lr(1e-2));
        let zero = Gradients::zeros_like(&net);
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net.layers(), before.layers());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = DenseNetwork::from_layers(vec![Layer {
            weights: Array2::from_elem((1, 1), 0.5),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }]);
        let lr = 0.01;
        let mut opt = OptimizerState::new(&net, AdamConfig::with_lr(lr));
        let mut g = Gradients::zeros_like(&net);
        g.weights[0].fill(3.0);
        opt.step(&mut net, &g).unwrap();
        let moved = 0.5 - net.layers()[0].weights[[0, 0]];
        assert!((moved - lr).abs() < 1e-8, "{moved}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = DenseNetwork::new(&spec(2, &[2], 1, Activation::Identity), &mut seeded_rng(0, 0));
        let mut opt = OptimizerState::new(&net, AdamConfig::with_lr(1e-3));
        let mut g = Gradients::zeros_like(&net);
        g.biases[1][0] = f64::NAN;
        assert!(matches!(
            opt.step(&mut net, &g),
            Err(NnError::NonFiniteGradient { layer: 1, part: "bias" })
        ));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        // f(w, b) = (w - 3)² + (b + 1)²
        let mut net = DenseNetwork::from_layers(vec![Layer {
            weights: Array2::zeros((1, 1)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }]);
        let mut opt = OptimizerState::new(&net, AdamConfig::with_lr(0.05));
        for _ in 0..5000 {
            let w = net.layers()[0].weights[[0, 0]];
            let b = net.layers()[0].bias[0];
            let mut g = Gradients::zeros_like(&net);
            g.weights[0][[0, 0]] = 2.0 * (w - 3.0);
            g.biases[0][0] = 2.0 * (b + 1.0);
            opt.step(&mut net, &g).unwrap();
        }
        assert!((net.layers()[0].weights[[0, 0]] - 3.0).abs() < 1e-6);
        assert!((net.layers()[0].bias[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = DenseNetwork::new(&spec(5, &[7, 6], 2, Activation::Tanh), &mut seeded_rng(3, 0));
        let bytes = net.to_checkpoint_bytes();
        let back = DenseNetwork::read_checkpoint(&bytes[..]).unwrap();
        let x = [0.1, -0.2, 0.3, 0.9, -1.1];
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.to_checkpoint_bytes(), bytes);
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let net = DenseNetwork::new(&spec(2, &[2], 1, Activation::Tanh), &mut seeded_rng(3, 0));
        let mut bytes = net.to_checkpoint_bytes();
        assert!(DenseNetwork::read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(DenseNetwork::read_checkpoint(&bytes[..]), Err(NnError::BadCheckpoint(_))));
    }
}
