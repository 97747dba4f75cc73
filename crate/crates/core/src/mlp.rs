//! Feed-forward acoustic model: spliced frames in, pdf posteriors out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ExampleSet;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Activation {
    Relu = 0,
    Sigmoid = 1,
    Tanh = 2,
    Softmax = 3,
}

impl Activation {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Relu,
            1 => Self::Sigmoid,
            2 => Self::Tanh,
            3 => Self::Softmax,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Relu, Self::Sigmoid, Self::Tanh, Self::Softmax]
            .into_iter()
            .find(|a| a.name() == name)
    }
}

/// Affine map followed by an activation. `weights` is `out_dim x in_dim`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Float> Layer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    fn affine(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(w, &b)| {
            w.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x)
        }));
    }
}

/// Stack of layers ending in a softmax over pdfs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T = f32> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
}

impl<T: Float> MlpModel<T> {
    /// Validates the layer chain: dims connect, only the last layer is
    /// softmax, parameter lengths match and are finite.
    pub fn new(input_dim: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        if input_dim == 0 {
            return Err(Error::Model("input dimension must be positive".into()));
        }
        let mut prev = input_dim;
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != prev {
                return Err(Error::Model(format!(
                    "layer {i} expects input dim {} but previous output is {prev}",
                    layer.in_dim
                )));
            }
            if layer.out_dim == 0 {
                return Err(Error::Model(format!("layer {i} has zero outputs")));
            }
            if (i == last) != (layer.activation == Activation::Softmax) {
                return Err(Error::Model(format!(
                    "layer {i}: softmax must be the final activation and only there (found {})",
                    layer.activation.name()
                )));
            }
            if layer.weights.len() != layer.in_dim * layer.out_dim || layer.bias.len() != layer.out_dim {
                return Err(Error::Model(format!("layer {i}: parameter length mismatch")));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("layer {i}: non-finite parameter")));
            }
            prev = layer.out_dim;
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_pdfs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Converts parameters to another float type.
    pub fn cast<U: Float>(&self) -> MlpModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from(*x).expect("float cast")).collect();
        MlpModel {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                    weights: conv(&l.weights),
                    bias: conv(&l.bias),
                })
                .collect(),
        }
    }

    /// Posterior for a single input row.
    pub fn forward_row(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.input_dim {
            return Err(Error::DimMismatch { expected: self.input_dim, actual: input.len() });
        }
        let mut acts = Activations::default();
        self.run(input, &mut acts);
        Ok(acts.outputs.pop().unwrap_or_default())
    }

    /// Cross-entropy `-log p(label | input)`, computed from the logits.
    pub fn loss(&self, input: &[T], label: usize) -> Result<T> {
        if input.len() != self.input_dim {
            return Err(Error::DimMismatch { expected: self.input_dim, actual: input.len() });
        }
        let mut acts = Activations::default();
        self.run(input, &mut acts);
        Ok(acts.nll(label))
    }

    /// Mean cross-entropy gradient over `(input, label)` pairs; returns the
    /// mean loss alongside. Gradients share the model's layout.
    pub fn gradient<'a, I>(&self, batch: I) -> Result<(Vec<Layer<T>>, T)>
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
        T: 'a,
    {
        let mut grads: Vec<Layer<T>> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim, l.activation))
            .collect();
        let mut acts = Activations::default();
        let mut total = T::zero();
        let mut n = 0usize;
        for (input, label) in batch {
            if input.len() != self.input_dim {
                return Err(Error::DimMismatch { expected: self.input_dim, actual: input.len() });
            }
            if label >= self.num_pdfs() {
                return Err(Error::DimMismatch { expected: self.num_pdfs(), actual: label });
            }
            self.run(input, &mut acts);
            total = total + acts.nll(label);
            self.backprop(input, label, &acts, &mut grads);
            n += 1;
        }
        if n > 0 {
            let scale = T::one() / T::from(n).expect("batch size");
            for g in &mut grads {
                g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v = *v * scale);
            }
            total = total * scale;
        }
        Ok((grads, total))
    }

    fn run(&self, input: &[T], acts: &mut Activations<T>) {
        acts.outputs.resize_with(self.layers.len(), Vec::new);
        acts.logits.clear();
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.outputs.split_at_mut(i);
            let src = if i == 0 { input } else { &done[i - 1] };
            let out = &mut rest[0];
            layer.affine(src, out);
            match layer.activation {
                Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(T::zero())),
                Activation::Sigmoid => {
                    out.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp()))
                }
                Activation::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Softmax => {
                    acts.logits.clone_from(out);
                    softmax_in_place(out);
                }
            }
        }
    }

    fn backprop(&self, input: &[T], label: usize, acts: &Activations<T>, grads: &mut [Layer<T>]) {
        // Softmax + cross-entropy: dL/dz = p - onehot.
        let mut delta: Vec<T> = acts.outputs[self.layers.len() - 1].clone();
        delta[label] = delta[label] - T::one();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let src = if i == 0 { input } else { &acts.outputs[i - 1] };
            let g = &mut grads[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = g.bias[o] + d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter_mut().zip(src).for_each(|(w, &x)| *w = *w + d * x);
            }
            if i == 0 {
                break;
            }
            let below = &self.layers[i - 1];
            let below_out = &acts.outputs[i - 1];
            let mut next = vec![T::zero(); layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                next.iter_mut().zip(row).for_each(|(n, &w)| *n = *n + w * d);
            }
            for (n, &a) in next.iter_mut().zip(below_out) {
                *n = *n * derivative(below.activation, a);
            }
            delta = next;
        }
    }
}

impl MlpModel<f32> {
    /// Row-wise posteriors for a `B x input_dim` batch.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim {
            return Err(Error::DimMismatch { expected: self.input_dim, actual: batch.cols() });
        }
        let mut out = Matrix::zeros(batch.rows(), self.num_pdfs());
        let mut acts = Activations::default();
        for (r, row) in batch.iter_rows().enumerate() {
            self.run(row, &mut acts);
            out.row_mut(r).copy_from_slice(&acts.outputs[self.layers.len() - 1]);
        }
        Ok(out)
    }
}

#[derive(Debug)]
struct Activations<T> {
    outputs: Vec<Vec<T>>,
    logits: Vec<T>,
}

impl<T> Default for Activations<T> {
    fn default() -> Self {
        Self { outputs: Vec::new(), logits: Vec::new() }
    }
}

impl<T: Float> Activations<T> {
    fn nll(&self, label: usize) -> T {
        let max = self.logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum = self.logits.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
        sum.ln() + max - self.logits[label]
    }
}

/// Derivative of the activation expressed through its output.
fn derivative<T: Float>(act: Activation, out: T) -> T {
    match act {
        Activation::Relu => {
            if out > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => out * (T::one() - out),
        Activation::Tanh => T::one() - out * out,
        Activation::Softmax => unreachable!("softmax only on the output layer"),
    }
}

/// Max-subtracted softmax.
pub fn softmax_in_place<T: Float>(v: &mut [T]) {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// Glorot-uniform weights, zero biases. `layer_dims` lists every layer's
/// output size; the last entry is the number of pdfs and gets softmax.
pub fn init_model(
    input_dim: usize,
    layer_dims: &[usize],
    hidden: Activation,
    seed: u64,
) -> Result<MlpModel> {
    if layer_dims.is_empty() {
        return Err(Error::Model("at least one layer is required".into()));
    }
    if hidden == Activation::Softmax {
        return Err(Error::Model("softmax is not a hidden activation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(layer_dims.len());
    let mut prev = input_dim;
    for (i, &out) in layer_dims.iter().enumerate() {
        let activation = if i + 1 == layer_dims.len() { Activation::Softmax } else { hidden };
        let limit = libm::sqrtf(6.0 / (prev + out) as f32);
        let mut layer = Layer::zeros(prev, out, activation);
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
        layers.push(layer);
        prev = out;
    }
    MlpModel::new(input_dim, layers)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, learning_rate: 0.1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches, measured before each update.
    pub loss: f64,
    pub frame_accuracy: f64,
}

/// Minibatch SGD on mean cross-entropy. Examples from all shards are pooled
/// and reshuffled every epoch from a generator seeded with `cfg.seed`.
pub fn train_sgd(
    mut model: MlpModel,
    shards: &[ExampleSet],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochReport>)> {
    cfg.validate()?;
    let k = model.num_pdfs();
    let mut order = Vec::new();
    for (s, set) in shards.iter().enumerate() {
        if set.input_dim() != model.input_dim() && !set.is_empty() {
            return Err(Error::DimMismatch { expected: model.input_dim(), actual: set.input_dim() });
        }
        if let Some(&bad) = set.labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::DimMismatch { expected: k, actual: bad as usize });
        }
        order.extend((0..set.len()).map(|i| (s, i)));
    }
    if order.is_empty() {
        return Err(Error::NoFrames);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut posterior = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            for &(s, i) in batch {
                posterior.clear();
                posterior.extend(model.forward_row(shards[s].inputs.row(i))?);
                if argmax(&posterior) == shards[s].labels[i] as usize {
                    correct += 1;
                }
            }
            let (grads, loss) = model.gradient(
                batch.iter().map(|&(s, i)| (shards[s].inputs.row(i), shards[s].labels[i] as usize)),
            )?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            loss_sum += f64::from(loss) * batch.len() as f64;
            if cfg.learning_rate > 0.0 {
                for (layer, g) in model.layers.iter_mut().zip(&grads) {
                    let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
                    let grad = g.weights.iter().chain(&g.bias);
                    params.zip(grad).for_each(|(p, &g)| *p -= cfg.learning_rate * g);
                }
            }
        }
        reports.push(EpochReport {
            epoch,
            loss: loss_sum / order.len() as f64,
            frame_accuracy: correct as f64 / order.len() as f64,
        });
    }
    Ok((model, reports))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
