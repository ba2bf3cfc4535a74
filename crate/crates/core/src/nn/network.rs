//! Parameter storage and the batched forward/backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::conv::ConvGeometry;
use super::layers::dense::Dense;
use super::layers::elementwise::{dropout, dropout_backward, relu, relu_backward, DropoutMode};
use super::layers::lrn::Lrn;
use super::layers::pool::PoolGeometry;
use super::layers::softmax::softmax_xent_batch;
use super::scalar::Scalar;
use super::spec::{LayerSpec, NetworkSpec, Shape3, CLASSES};
use super::tensor::check_finite;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with `std = sqrt(2 / fan_in)`.
    He,
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian { std: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(w: usize, b: usize) -> Self {
        LayerParams { weights: vec![T::zero(); w], bias: vec![T::zero(); b] }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Learnable parameters (one entry per layer, empty for parameter-free
/// layers) and their momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub layers: Vec<LayerParams<T>>,
    pub velocity: Vec<LayerParams<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let sizes = spec.param_sizes()?;
        let layers: Vec<LayerParams<T>> = sizes.iter().map(|&(w, b)| LayerParams::zeros(w, b)).collect();
        Ok(ParamStore { velocity: layers.clone(), layers })
    }

    /// Random weights, zero biases, zero momentum.
    pub fn init(spec: &NetworkSpec, init: Init, seed: u64) -> Result<Self> {
        let mut store = Self::zeros(spec)?;
        let inputs = spec.layer_inputs()?;
        let root = SeedStream::new(seed).named("init");
        for (i, ((layer, params), input)) in spec.layers.iter().zip(&mut store.layers).zip(&inputs).enumerate() {
            let fan_in = match *layer {
                LayerSpec::Conv { kernel, .. } => input.channels * kernel * kernel,
                LayerSpec::Dense { .. } => input.len(),
                _ => continue,
            };
            let std = match init {
                Init::Gaussian { std } => std,
                Init::He => (2.0 / fan_in as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("init std {std}: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(root.index(i as u64).value());
            params.weights.iter_mut().for_each(|w| *w = T::of(normal.sample(&mut rng)));
        }
        Ok(store)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let conv = |ls: &Vec<LayerParams<T>>| {
            ls.iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().map(|v| U::of(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect()
        };
        ParamStore { layers: conv(&self.layers), velocity: conv(&self.velocity) }
    }

    pub fn shapes_match(&self, spec: &NetworkSpec) -> bool {
        match spec.param_sizes() {
            Ok(sizes) => {
                sizes.len() == self.layers.len()
                    && sizes.iter().zip(&self.layers).all(|(&(w, b), l)| l.weights.len() == w && l.bias.len() == b)
                    && self.velocity.len() == self.layers.len()
                    && self.velocity.iter().zip(&self.layers).all(|(v, l)| v.weights.len() == l.weights.len() && v.bias.len() == l.bias.len())
            }
            Err(_) => false,
        }
    }
}

pub type Gradients<T> = Vec<LayerParams<T>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Dropout masks for layer `i` are drawn from `stream.index(i)`.
    Train(SeedStream),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    Relu(Vec<bool>),
    Pool(Vec<u32>),
}

/// Per-layer piece selection; see [`Network::regions`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regions(pub Vec<Option<Region>>);

#[derive(Debug, Clone)]
enum Op {
    Conv(ConvGeometry),
    Relu,
    Pool(PoolGeometry),
    Lrn(Lrn, Shape3),
    Dense(Dense),
    Dropout(f64),
    Softmax,
}

#[derive(Debug, Clone)]
enum Aux<T> {
    None,
    Argmax(Vec<u32>),
    Scale(Vec<T>),
    Mask(Vec<T>),
}

/// Activations retained for the backward pass.
pub struct Forward<'a, T> {
    input: &'a [T],
    outputs: Vec<Vec<T>>,
    aux: Vec<Aux<T>>,
    batch: usize,
}

impl<T: Scalar> Forward<'_, T> {
    /// Class probabilities, `batch × 2`.
    pub fn probabilities(&self) -> &[T] {
        self.outputs.last().expect("network has layers")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// A validated [`NetworkSpec`] with precomputed layer geometry.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    ops: Vec<Op>,
    input_len: usize,
}

impl Network {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        let inputs = spec.layer_inputs()?;
        let mut ops = Vec::with_capacity(spec.layers.len());
        for (layer, &input) in spec.layers.iter().zip(&inputs) {
            ops.push(match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, pad } => {
                    Op::Conv(ConvGeometry::new(input, out_channels, kernel, stride, pad)?)
                }
                LayerSpec::Relu => Op::Relu,
                LayerSpec::MaxPool { window, stride } => Op::Pool(PoolGeometry::new(input, window, stride)?),
                LayerSpec::Lrn { size, k, alpha, beta } => Op::Lrn(Lrn { size, k, alpha, beta }, input),
                LayerSpec::Dense { units } => Op::Dense(Dense { inputs: input.len(), units }),
                LayerSpec::Dropout { rate } => Op::Dropout(rate),
                LayerSpec::SoftmaxXent => Op::Softmax,
            });
        }
        Ok(Network { spec: spec.clone(), ops, input_len: spec.input_shape().len() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Values per input sample (C·H·W).
    pub fn input_len(&self) -> usize {
        self.input_len
    }

    fn check_params<T: Scalar>(&self, params: &ParamStore<T>) -> Result<()> {
        if params.layers.len() != self.ops.len() {
            return Err(Error::Shape("parameter store does not match the network".into()));
        }
        Ok(())
    }

    /// Runs every layer on a CHW batch; the last output holds probabilities.
    pub fn forward<'a, T: Scalar>(&self, params: &ParamStore<T>, input: &'a [T], mode: Mode) -> Result<Forward<'a, T>> {
        self.forward_in(params, input, mode, None)
    }

    /// As [`Network::forward`], with ReLU states and pool selections taken
    /// from `fixed` when given.
    pub fn forward_in<'a, T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &'a [T],
        mode: Mode,
        fixed: Option<&Regions>,
    ) -> Result<Forward<'a, T>> {
        self.check_params(params)?;
        if fixed.is_some_and(|r| r.0.len() != self.ops.len()) {
            return Err(Error::Shape("regions do not match the network".into()));
        }
        if input.len() % self.input_len != 0 {
            return Err(Error::Shape(format!("input of {} values is not a whole number of {}-value samples", input.len(), self.input_len)));
        }
        let batch = input.len() / self.input_len;
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.ops.len());
        let mut aux = Vec::with_capacity(self.ops.len());
        for (i, (op, p)) in self.ops.iter().zip(&params.layers).enumerate() {
            let x: &[T] = if i == 0 { input } else { &outputs[i - 1] };
            let region = fixed.and_then(|r| r.0[i].as_ref());
            let (y, a) = match op {
                Op::Conv(g) => (g.forward(x, &p.weights, &p.bias, batch), Aux::None),
                Op::Relu => match region {
                    Some(Region::Relu(on)) if on.len() == x.len() => {
                        (x.iter().zip(on).map(|(&v, &on)| if on { v } else { T::zero() }).collect(), Aux::None)
                    }
                    _ => (relu(x), Aux::None),
                },
                Op::Pool(g) => match region {
                    Some(Region::Pool(arg)) if arg.len() == batch * g.output().len() => {
                        let (in_len, out_len) = (g.input.len(), g.output().len());
                        let y = arg.iter().enumerate().map(|(o, &a)| x[(o / out_len) * in_len + a as usize]).collect();
                        (y, Aux::Argmax(arg.clone()))
                    }
                    _ => {
                        let (y, arg) = g.forward(x, batch);
                        (y, Aux::Argmax(arg))
                    }
                },
                Op::Lrn(l, shape) => {
                    let (y, scale) = l.forward(*shape, x, batch);
                    (y, Aux::Scale(scale))
                }
                Op::Dense(d) => (d.forward(x, &p.weights, &p.bias, batch), Aux::None),
                Op::Dropout(rate) => {
                    let m = match mode {
                        Mode::Eval => DropoutMode::Eval,
                        Mode::Train(stream) => DropoutMode::Train(stream.index(i as u64)),
                    };
                    let (y, mask) = dropout(x, *rate, m)?;
                    (y, Aux::Mask(mask))
                }
                Op::Softmax => {
                    let probs = x.chunks_exact(CLASSES).flat_map(super::layers::softmax::softmax).collect();
                    (probs, Aux::None)
                }
            };
            check_finite(&y, &format!("layer {i} ({})", self.spec.layers[i].name()))?;
            outputs.push(y);
            aux.push(a);
        }
        Ok(Forward { input, outputs, aux, batch })
    }

    /// Mean cross-entropy over the batch and its parameter gradients.
    pub fn backward<T: Scalar>(&self, params: &ParamStore<T>, fwd: &Forward<'_, T>, labels: &[usize]) -> Result<(T, Gradients<T>)> {
        if labels.len() != fwd.batch || labels.iter().any(|&l| l >= CLASSES) {
            return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), fwd.batch)));
        }
        let batch = fwd.batch;
        let last = self.ops.len() - 1;
        let logits = if last == 0 { fwd.input } else { &fwd.outputs[last - 1] };
        let (loss, _, mut grad) = softmax_xent_batch(logits, labels, CLASSES);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss:?}")));
        }
        let mut grads: Gradients<T> =
            params.layers.iter().map(|l| LayerParams::zeros(l.weights.len(), l.bias.len())).collect();
        for i in (0..last).rev() {
            let x: &[T] = if i == 0 { fwd.input } else { &fwd.outputs[i - 1] };
            let p = &params.layers[i];
            grad = match (&self.ops[i], &fwd.aux[i]) {
                (Op::Conv(g), _) => {
                    let gr = g.backward(x, &p.weights, &grad, batch);
                    grads[i] = LayerParams { weights: gr.weights, bias: gr.bias };
                    gr.input
                }
                (Op::Relu, _) => relu_backward(&fwd.outputs[i], &grad),
                (Op::Pool(g), Aux::Argmax(arg)) => g.backward(arg, &grad, batch),
                (Op::Lrn(l, shape), Aux::Scale(scale)) => l.backward(*shape, x, scale, &grad, batch),
                (Op::Dense(d), _) => {
                    let (dx, dw, db) = d.backward(x, &p.weights, &grad, batch);
                    grads[i] = LayerParams { weights: dw, bias: db };
                    dx
                }
                (Op::Dropout(_), Aux::Mask(mask)) => dropout_backward(mask, &grad),
                _ => unreachable!("layer {i} has inconsistent forward state"),
            };
        }
        Ok((loss, grads))
    }

    /// Forward and backward in one call: `(loss, gradients, probabilities)`.
    pub fn loss_and_gradients<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &[T],
        labels: &[usize],
        mode: Mode,
    ) -> Result<(T, Gradients<T>, Vec<T>)> {
        let fwd = self.forward(params, input, mode)?;
        let (loss, grads) = self.backward(params, &fwd, labels)?;
        Ok((loss, grads, fwd.probabilities().to_vec()))
    }

    /// Which piece of the piecewise-smooth network a pass went through:
    /// every ReLU on/off state and max-pool argmax.
    pub fn regions<T: Scalar>(&self, fwd: &Forward<'_, T>) -> Regions {
        Regions(
            self.ops
                .iter()
                .zip(&fwd.aux)
                .zip(&fwd.outputs)
                .map(|((op, aux), y)| match (op, aux) {
                    (Op::Relu, _) => Some(Region::Relu(y.iter().map(|&v| v > T::zero()).collect())),
                    (Op::Pool(_), Aux::Argmax(arg)) => Some(Region::Pool(arg.clone())),
                    _ => None,
                })
                .collect(),
        )
    }

    /// Mean loss and [`Network::regions`] of one pass, optionally evaluated
    /// inside fixed regions (the smooth extension across kinks).
    pub fn loss_in<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &[T],
        labels: &[usize],
        mode: Mode,
        fixed: Option<&Regions>,
    ) -> Result<(T, Regions)> {
        let fwd = self.forward_in(params, input, mode, fixed)?;
        let last = self.ops.len() - 1;
        let logits = if last == 0 { input } else { &fwd.outputs[last - 1] };
        Ok((softmax_xent_batch(logits, labels, CLASSES).0, self.regions(&fwd)))
    }

    /// Mean loss only (used by finite differences).
    pub fn loss<T: Scalar>(&self, params: &ParamStore<T>, input: &[T], labels: &[usize], mode: Mode) -> Result<T> {
        let fwd = self.forward(params, input, mode)?;
        let last = self.ops.len() - 1;
        let logits = if last == 0 { input } else { &fwd.outputs[last - 1] };
        Ok(softmax_xent_batch(logits, labels, CLASSES).0)
    }
}
