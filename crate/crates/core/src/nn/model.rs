//! Fully connected network parameters, forward pass and manual backprop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TrainError;
use crate::loss::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> i64 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(c: i64) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One dense layer, `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn zeros_like(&self) -> Self {
        Layer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: vec![0.0; self.weights.len()],
            bias: self.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    /// This layer's parameters in flattening order, optionally without the bias.
    pub fn flat(&self, include_bias: bool) -> Vec<f64> {
        let mut v = self.weights.clone();
        if include_bias {
            if let Some(b) = &self.bias {
                v.extend_from_slice(b);
            }
        }
        v
    }
}

/// Ordered dense layers sharing one hidden activation; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl ModelParams {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self, TrainError> {
        if layers.is_empty() {
            return Err(TrainError::Shape("model has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(TrainError::Shape(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.in_dim * l.out_dim {
                return Err(TrainError::Shape(format!(
                    "layer {i}: {} weights for a {}x{} matrix",
                    l.weights.len(),
                    l.out_dim,
                    l.in_dim
                )));
            }
            if let Some(b) = &l.bias {
                if b.len() != l.out_dim {
                    return Err(TrainError::Shape(format!(
                        "layer {i}: bias length {} != {}",
                        b.len(),
                        l.out_dim
                    )));
                }
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(TrainError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(ModelParams { layers, activation })
    }

    /// Glorot-uniform weights from a seeded stream, zero biases.
    pub fn init(
        dims: &[usize],
        with_bias: bool,
        activation: Activation,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if dims.len() < 2 {
            return Err(TrainError::Shape(
                "need at least input and output dimensions".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let a = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    in_dim: n_in,
                    out_dim: n_out,
                    weights: (0..n_in * n_out).map(|_| rng.random_range(-a..a)).collect(),
                    bias: with_bias.then(|| vec![0.0; n_out]),
                }
            })
            .collect();
        Self::new(layers, activation)
    }

    /// Input dimension followed by each layer's output dimension.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
            activation: self.activation,
        }
    }

    /// Layers in order, weights before biases, row-major.
    pub fn flatten(&self) -> WeightVector {
        self.flatten_with(true)
    }

    pub fn flatten_with(&self, include_biases: bool) -> WeightVector {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if include_biases {
                if let Some(b) = &l.bias {
                    out.extend_from_slice(b);
                }
            }
        }
        WeightVector::new(out)
    }

    /// A model with this structure and the given flat parameters.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self, TrainError> {
        let mut m = self.clone();
        m.assign_flat(flat)?;
        Ok(m)
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), TrainError> {
        if flat.len() != self.param_count() {
            return Err(TrainError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        self.for_each_param_mut(true, |i, p| *p = flat[i]);
        Ok(())
    }

    /// Visits parameters in flattening order with their position in the
    /// flattened vector (biases skipped when `include_biases` is false).
    pub(crate) fn for_each_param_mut(
        &mut self,
        include_biases: bool,
        mut f: impl FnMut(usize, &mut f64),
    ) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in &mut l.weights {
                f(i, w);
                i += 1;
            }
            if include_biases {
                if let Some(b) = &mut l.bias {
                    for v in b {
                        f(i, v);
                        i += 1;
                    }
                }
            }
        }
    }

    /// `self += scale * other`, for models of identical structure.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (w, g) in l.weights.iter_mut().zip(&o.weights) {
                *w += scale * g;
            }
            if let (Some(b), Some(gb)) = (&mut l.bias, &o.bias) {
                for (v, g) in b.iter_mut().zip(gb) {
                    *v += scale * g;
                }
            }
        }
    }

    /// Logits for one input.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward_cached(input, &mut acts);
        acts.pop().expect("at least one layer")
    }

    /// Runs the network and keeps every layer's output (`acts[i]` is the
    /// output of layer `i`; the last entry holds the logits).
    fn forward_cached(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let x: &[f64] = if i == 0 { input } else { &acts[i - 1] };
            let mut y = vec![0.0; l.out_dim];
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &l.weights[o * l.in_dim..(o + 1) * l.in_dim];
                let mut s = l.bias.as_ref().map_or(0.0, |b| b[o]);
                for (w, xv) in row.iter().zip(x) {
                    s += w * xv;
                }
                *yo = if i == last {
                    s
                } else {
                    self.activation.apply(s)
                };
            }
            acts.push(y);
        }
    }

    pub fn predict(&self, input: &[f64]) -> usize {
        argmax(&self.forward(input))
    }

    /// Mean softmax cross-entropy over `indices` of `data`, accumulating its
    /// gradient into `grad` when given.
    pub(crate) fn task_loss_and_grad(
        &self,
        data: &super::data::Dataset,
        indices: &[usize],
        mut grad: Option<&mut ModelParams>,
    ) -> f64 {
        let scale = 1.0 / indices.len() as f64;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut total = 0.0;
        let mut delta = Vec::new();
        for &idx in indices {
            let x = data.sample(idx);
            let label = data.labels[idx];
            self.forward_cached(x, &mut acts);
            let logits = acts.last().unwrap();
            let (loss, probs) = softmax_xent(logits, label);
            total += loss;
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };

            // dL/dlogits = p - onehot
            delta.clear();
            delta.extend(probs);
            delta[label] -= 1.0;
            delta.iter_mut().for_each(|d| *d *= scale);
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input: &[f64] = if li == 0 { x } else { &acts[li - 1] };
                let gl = &mut g.layers[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gl.weights[o * l.in_dim..(o + 1) * l.in_dim];
                    for (gw, xv) in row.iter_mut().zip(input) {
                        *gw += d * xv;
                    }
                    if let Some(gb) = &mut gl.bias {
                        gb[o] += d;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; l.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &l.weights[o * l.in_dim..(o + 1) * l.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(&acts[li - 1]) {
                    *p *= self.activation.derivative_from_output(a);
                }
                delta = prev;
            }
        }
        total * scale
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of the softmax of `logits` against `label`, and the probabilities.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

/// The flattened parameter vector of a model.
pub fn flatten_weights(model: &ModelParams) -> WeightVector {
    model.flatten()
}
