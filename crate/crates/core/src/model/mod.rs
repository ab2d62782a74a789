//! Minimal differentiable classifiers: a linear-softmax model and a ReLU MLP,
//! both with hand-written backpropagation.
//!
//! Activations are carried in `f64` internally; tensors crossing the API are
//! `f32`. The cross-entropy loss is evaluated as `logsumexp(z) - z_y`, which
//! is non-negative and does not round small probabilities to zero.

mod io;
mod train;

use std::fmt;

pub use io::{load_model, save_model};
pub use train::{train, train_with_history};

use crate::error::{Error, Result};
use crate::numerics::{gaussian, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinearSoftmax,
    MlpRelu,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LinearSoftmax => "linear-softmax",
            ModelKind::MlpRelu => "mlp-relu",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-softmax" | "linear" => Ok(ModelKind::LinearSoftmax),
            "mlp-relu" | "mlp" => Ok(ModelKind::MlpRelu),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Empty for the linear model.
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LinearSoftmax,
            input_dim,
            hidden_dims: Vec::new(),
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: &[usize], num_classes: usize) -> Self {
        Self {
            kind: ModelKind::MlpRelu,
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be >= 1"));
        }
        match self.kind {
            ModelKind::LinearSoftmax if !self.hidden_dims.is_empty() => {
                Err(Error::invalid("linear-softmax takes no hidden layers"))
            }
            ModelKind::MlpRelu if self.hidden_dims.is_empty() => {
                Err(Error::invalid("mlp-relu needs at least one hidden layer"))
            }
            _ if self.hidden_dims.contains(&0) => Err(Error::invalid("hidden width must be >= 1")),
            _ => Ok(()),
        }
    }

    /// `(fan_in, fan_out)` for each layer, input to head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer: `weight` is `(out, in)`, `bias` is `(out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<Layer>,
}

impl Weights {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Layer {
                    weight: Tensor::zeros(&[o, i]),
                    bias: Tensor::zeros(&[o]),
                })
                .collect(),
        }
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn init(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let std = (1.0 / i as f64).sqrt() as f32;
                Ok(Layer {
                    weight: gaussian(rng, &[o, i], 0.0, std)?,
                    bias: Tensor::zeros(&[o]),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let dims = spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "spec has {} layers, weights have {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (layer, (i, o)) in self.layers.iter().zip(dims) {
            if layer.weight.shape() != [o, i] {
                return Err(Error::ShapeMismatch {
                    expected: vec![o, i],
                    actual: layer.weight.shape().to_vec(),
                });
            }
            if layer.bias.shape() != [o] {
                return Err(Error::ShapeMismatch {
                    expected: vec![o],
                    actual: layer.bias.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Tensor,
    pub probs: Tensor,
    pub label: usize,
}

impl Prediction {
    pub fn confidence(&self, label: usize) -> f64 {
        self.probs.data()[label] as f64
    }
}

/// Scalar quantity whose input gradient is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Cross-entropy `L(x; y)`.
    #[default]
    Loss,
    /// Raw logit `z_y(x)`.
    Logit,
}

/// A classifier with analytic input gradients.
pub trait DifferentiableModel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn forward(&self, x: &Tensor) -> Result<Prediction>;

    /// Value of `objective` at `x` for class `y`, in `f64`.
    fn objective(&self, x: &Tensor, y: usize, objective: Objective) -> Result<f64>;

    /// Gradient of `objective` with respect to `x`, shaped like `x`.
    fn gradient(&self, x: &Tensor, y: usize, objective: Objective) -> Result<Tensor>;

    fn loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        self.objective(x, y, Objective::Loss)
    }

    fn input_gradient(&self, x: &Tensor, y: usize) -> Result<Tensor> {
        self.gradient(x, y, Objective::Loss)
    }

    fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.label)
    }
}

/// A [`ModelSpec`] paired with matching [`Weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    weights: Weights,
}

struct Trace {
    /// Pre-activations per layer; the last entry holds the logits.
    pre: Vec<Vec<f64>>,
    /// Post-ReLU activations of the hidden layers.
    hidden: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(spec: ModelSpec, weights: Weights) -> Result<Self> {
        spec.validate()?;
        weights.check(&spec)?;
        Ok(Self { spec, weights })
    }

    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let weights = Weights::init(&spec, &mut Rng::new(seed))?;
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn into_weights(self) -> Weights {
        self.weights
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "model expects {} inputs, got {} (shape {:?})",
                self.spec.input_dim,
                x.len(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[f32]) -> Trace {
        let n = self.weights.layers.len();
        let mut pre = Vec::with_capacity(n);
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
        let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        for (l, layer) in self.weights.layers.iter().enumerate() {
            let src = if l == 0 { &input } else { &hidden[l - 1] };
            let (o, i) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            let w = layer.weight.data();
            let z: Vec<f64> = (0..o)
                .map(|r| {
                    let row = &w[r * i..(r + 1) * i];
                    let dot: f64 = row.iter().zip(src).map(|(&a, &b)| a as f64 * b).sum();
                    dot + layer.bias.data()[r] as f64
                })
                .collect();
            if l + 1 < n {
                hidden.push(z.iter().map(|&v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        Trace { pre, hidden }
    }

    /// Gradient of `objective` with respect to the logits.
    fn output_delta(logits: &[f64], y: usize, objective: Objective) -> Vec<f64> {
        match objective {
            Objective::Loss => {
                let mut p = softmax(logits);
                p[y] -= 1.0;
                p
            }
            Objective::Logit => {
                let mut d = vec![0.0; logits.len()];
                d[y] = 1.0;
                d
            }
        }
    }

    /// Backpropagates `delta` from the logits, optionally recording the
    /// per-layer weight and bias gradients. Returns the input gradient.
    fn backward(&self, x: &[f32], trace: &Trace, mut delta: Vec<f64>, mut grads: Option<&mut [(Vec<f64>, Vec<f64>)]>) -> Vec<f64> {
        let layers = &self.weights.layers;
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let (o, i) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = &mut g[l];
                for r in 0..o {
                    gb[r] += delta[r];
                    if delta[r] == 0.0 {
                        continue;
                    }
                    let row = &mut gw[r * i..(r + 1) * i];
                    if l == 0 {
                        for (gv, &a) in row.iter_mut().zip(x) {
                            *gv += delta[r] * a as f64;
                        }
                    } else {
                        for (gv, &a) in row.iter_mut().zip(&trace.hidden[l - 1]) {
                            *gv += delta[r] * a;
                        }
                    }
                }
            }
            let w = layer.weight.data();
            let mut back = vec![0.0f64; i];
            for r in 0..o {
                if delta[r] == 0.0 {
                    continue;
                }
                for (b, &wv) in back.iter_mut().zip(&w[r * i..(r + 1) * i]) {
                    *b += delta[r] * wv as f64;
                }
            }
            if l > 0 {
                // ReLU subgradient at 0 is 0.
                for (b, &z) in back.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        delta
    }

    /// Exact gradient of the cross-entropy loss with respect to every weight
    /// and bias.
    pub fn weight_gradient(&self, x: &Tensor, y: usize) -> Result<Weights> {
        self.check_input(x)?;
        self.check_label(y)?;
        let mut acc = self.zero_accumulator();
        self.accumulate_weight_gradient(x.data(), y, &mut acc);
        self.accumulator_to_weights(acc, 1.0)
    }

    pub(crate) fn zero_accumulator(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.weights
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
            .collect()
    }

    /// Adds this sample's weight gradient into `acc`; returns the sample loss.
    pub(crate) fn accumulate_weight_gradient(&self, x: &[f32], y: usize, acc: &mut [(Vec<f64>, Vec<f64>)]) -> f64 {
        let trace = self.trace(x);
        let logits = trace.pre.last().expect("at least one layer");
        let delta = Self::output_delta(logits, y, Objective::Loss);
        self.backward(x, &trace, delta, Some(acc));
        cross_entropy(logits, y)
    }

    pub(crate) fn accumulator_to_weights(&self, acc: Vec<(Vec<f64>, Vec<f64>)>, scale: f64) -> Result<Weights> {
        let layers = acc
            .into_iter()
            .zip(&self.weights.layers)
            .map(|((gw, gb), l)| {
                Ok(Layer {
                    weight: Tensor::new(
                        l.weight.shape().to_vec(),
                        gw.into_iter().map(|v| (v * scale) as f32).collect(),
                    )?,
                    bias: Tensor::new(
                        l.bias.shape().to_vec(),
                        gb.into_iter().map(|v| (v * scale) as f32).collect(),
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Weights { layers })
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Weights {
        &mut self.weights
    }
}

impl DifferentiableModel for Network {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn forward(&self, x: &Tensor) -> Result<Prediction> {
        self.check_input(x)?;
        let trace = self.trace(x.data());
        let logits = trace.pre.last().expect("at least one layer");
        let probs = softmax(logits);
        let label = argmax(logits);
        Ok(Prediction {
            logits: Tensor::new(vec![logits.len()], logits.iter().map(|&v| v as f32).collect())?,
            probs: Tensor::new(vec![probs.len()], probs.iter().map(|&v| v as f32).collect())?,
            label,
        })
    }

    fn objective(&self, x: &Tensor, y: usize, objective: Objective) -> Result<f64> {
        self.check_input(x)?;
        self.check_label(y)?;
        let trace = self.trace(x.data());
        let logits = trace.pre.last().expect("at least one layer");
        Ok(match objective {
            Objective::Loss => cross_entropy(logits, y),
            Objective::Logit => logits[y],
        })
    }

    fn gradient(&self, x: &Tensor, y: usize, objective: Objective) -> Result<Tensor> {
        self.check_input(x)?;
        self.check_label(y)?;
        let trace = self.trace(x.data());
        let logits = trace.pre.last().expect("at least one layer");
        let delta = Self::output_delta(logits, y, objective);
        let g = self.backward(x.data(), &trace, delta, None);
        Tensor::new(x.shape().to_vec(), g.into_iter().map(|v| v as f32).collect())
    }
}

/// Softmax with the max logit subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    (lse - logits[y]).max(0.0)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
