//! A small dense-network engine: affine layers with pointwise activations,
//! reverse-mode gradients, binary cross-entropy and Adam.
//!
//! Batches are row-major in the sense that every row of an input matrix is
//! one sample. A layer computes `a = f(x Wᵀ + b)` with `W` of shape
//! `out × in`.
//!
//! # Checkpoint format
//!
//! ```text
//! magic     8 bytes  b"QGANNET1"
//! layers    u32 LE   L
//! per layer u32 LE in, u32 LE out, u8 activation tag, f64 LE slope
//!           (tags: 0 identity, 1 relu, 2 leaky_relu, 3 tanh, 4 sigmoid;
//!            slope is 0 unless the tag is leaky_relu)
//! body      f64 LE   for each layer: W row-major (out × in), then b (out)
//! ```

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BCE_EPSILON: f64 = 1e-7;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QGANNET1";

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input width {found} does not match layer input {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layer {layer} expects input {expected} but previous layer emits {found}")]
    BrokenChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("upstream gradient has shape {found:?}, expected {expected:?}")]
    GradientShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite gradient in layer {0}")]
    NonFiniteGradient(usize),
    #[error("optimizer state does not match the network layout")]
    StateMismatch,
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(s) => {
                if z >= 0.0 {
                    z
                } else {
                    s * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// `f'(z)` given the pre-activation `z` and output `a = f(z)`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if z >= 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    fn tag(self) -> (u8, f64) {
        match self {
            Activation::Identity => (0, 0.0),
            Activation::Relu => (1, 0.0),
            Activation::LeakyRelu(s) => (2, s),
            Activation::Tanh => (3, 0.0),
            Activation::Sigmoid => (4, 0.0),
        }
    }

    fn from_tag(tag: u8, slope: f64) -> Option<Self> {
        Some(match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu(slope),
            3 => Activation::Tanh,
            4 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Ordered stack of dense layers.
///
/// `generation` is bumped on every parameter update so that a forward cache
/// taken before an update cannot be fed to `backward` afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    generation: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input of every layer; `inputs[0]` is the batch itself.
    inputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Flattened in parameter order (per layer: W row-major, then b).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            for r in 0..g.weight.nrows() {
                out.extend(g.weight.row(r).iter());
            }
            out.extend(g.bias.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NetError> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(NetError::BrokenChain {
                    layer: i + 1,
                    expected: pair[1].input_dim(),
                    found: pair[0].output_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(NetError::BrokenChain {
                    layer: 0,
                    expected: l.output_dim(),
                    found: l.bias.len(),
                });
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    /// Weights from `N(0, weight_std²)`, zero biases. `dims` has one more
    /// entry than `activations`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], weight_std: f64, rng: &mut R) -> Self {
        assert_eq!(dims.len(), activations.len() + 1, "dims/activations length mismatch");
        let normal = Normal::new(0.0, weight_std).expect("finite standard deviation");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Dense {
                weight: DMatrix::from_fn(w[1], w[0], |_, _| rng.sample(normal)),
                bias: DVector::zeros(w[1]),
                activation,
            })
            .collect();
        Self { layers, generation: 0 }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, Option<(usize, usize)>, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weight.len();
            if index < nw {
                let cols = l.input_dim();
                return (li, Some((index / cols, index % cols)), 0);
            }
            index -= nw;
            if index < l.bias.len() {
                return (li, None, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index (same order as [`Gradients::flatten`]).
    pub fn param(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, Some(rc), _) => self.layers[l].weight[rc],
            (l, None, b) => self.layers[l].bias[b],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, Some(rc), _) => self.layers[l].weight[rc] = value,
            (l, None, b) => self.layers[l].bias[b] = value,
        }
        self.generation += 1;
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<ForwardCache, NetError> {
        if x.ncols() != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = &current * layer.weight.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            let a = z.map(|v| layer.activation.apply(v));
            inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok(ForwardCache {
            generation: self.generation,
            inputs,
            pre_activations,
            output: current,
        })
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NetError> {
        Ok(self.forward(x)?.output)
    }

    /// Parameter gradients and the gradient with respect to the input batch,
    /// given `∂L/∂output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &DMatrix<f64>,
    ) -> Result<(Gradients, DMatrix<f64>), NetError> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(NetError::StaleCache);
        }
        if upstream.shape() != cache.output.shape() {
            return Err(NetError::GradientShape {
                expected: cache.output.shape(),
                found: upstream.shape(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[i];
            let a = if i + 1 < self.layers.len() {
                &cache.inputs[i + 1]
            } else {
                &cache.output
            };
            for ((d, &zv), &av) in delta.iter_mut().zip(z.iter()).zip(a.iter()) {
                *d *= layer.activation.derivative(zv, av);
            }
            let weight = delta.tr_mul(&cache.inputs[i]);
            let bias = delta.row_sum().transpose();
            let next = &delta * &layer.weight;
            grads.push(LayerGrad { weight, bias });
            delta = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = CHECKPOINT_MAGIC.to_vec();
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            let (tag, slope) = l.activation.tag();
            buf.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
            buf.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
            buf.push(tag);
            buf.extend_from_slice(&slope.to_le_bytes());
        }
        for l in &self.layers {
            for r in 0..l.weight.nrows() {
                for v in l.weight.row(r).iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            for v in l.bias.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |msg: &str| NetError::Checkpoint(msg.to_string());
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8).ok_or_else(|| bad("too short"))? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let n_layers = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let input = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
            let output = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
            let tag = cur.take(1).ok_or_else(|| bad("truncated header"))?[0];
            let slope = cur.f64().ok_or_else(|| bad("truncated header"))?;
            let act = Activation::from_tag(tag, slope).ok_or_else(|| bad("unknown activation tag"))?;
            shapes.push((input, output, act));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (input, output, activation) in shapes {
            let mut weight = DMatrix::zeros(output, input);
            for r in 0..output {
                for c in 0..input {
                    weight[(r, c)] = cur.f64().ok_or_else(|| bad("truncated body"))?;
                }
            }
            let mut bias = DVector::zeros(output);
            for b in bias.iter_mut() {
                *b = cur.f64().ok_or_else(|| bad("truncated body"))?;
            }
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Mean binary cross-entropy with predictions clamped to `[ε, 1 − ε]`.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len(), "prediction/target length mismatch");
    let n = predictions.len() as f64;
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// `∂ bce_loss / ∂ p_i` on the clamped predictions.
pub fn bce_grad(predictions: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = predictions.len() as f64;
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            (p - t) / (p * (1.0 - p)) / n
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// GAN defaults: `β1 = 0.5`, `β2 = 0.999`, `eps = 1e-8`.
    pub fn gan(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        let zeros: Vec<LayerGrad> = net
            .layers
            .iter()
            .map(|l| LayerGrad {
                weight: DMatrix::zeros(l.output_dim(), l.input_dim()),
                bias: DVector::zeros(l.output_dim()),
            })
            .collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NetError> {
        if grads.layers.len() != net.layers.len() || self.m.len() != net.layers.len() {
            return Err(NetError::StateMismatch);
        }
        for (i, (g, l)) in grads.layers.iter().zip(&net.layers).enumerate() {
            if g.weight.shape() != l.weight.shape() || g.bias.len() != l.bias.len() {
                return Err(NetError::StateMismatch);
            }
            if !g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()) {
                return Err(NetError::NonFiniteGradient(i));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &gv), mv), vv) in layer
                .weight
                .iter_mut()
                .zip(g.weight.iter())
                .zip(m.weight.iter_mut())
                .zip(v.weight.iter_mut())
            {
                update(p, mv, vv, gv);
            }
            for (((p, &gv), mv), vv) in layer
                .bias
                .iter_mut()
                .zip(g.bias.iter())
                .zip(m.bias.iter_mut())
                .zip(v.bias.iter_mut())
            {
                update(p, mv, vv, gv);
            }
        }
        net.generation += 1;
        Ok(())
    }
}
