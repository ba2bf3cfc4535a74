//! Mini-batch SGD with momentum and weight decay, plus eval-mode prediction.

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::network::{Init, Mode, Network, ParamStore};
use super::spec::{NetworkSpec, CLASSES};
use crate::dataset::ImageCube;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// One iteration consumes one batch.
    pub iterations: usize,
    pub base_lr: f64,
    /// Learning rate multiplier applied every `lr_step` iterations.
    pub lr_decay: f64,
    /// 0 keeps the learning rate constant.
    pub lr_step: usize,
    pub momentum: f64,
    /// Applied to weights, not biases.
    pub weight_decay: f64,
    pub seed: u64,
    pub init: Init,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            iterations: 1000,
            base_lr: 0.01,
            lr_decay: 0.1,
            lr_step: 0,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            init: Init::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.base_lr) || !positive(self.lr_decay) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("momentum must lie in [0, 1) and weight decay be non-negative".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        match self.lr_step {
            0 => self.base_lr,
            step => self.base_lr * self.lr_decay.powi((iteration / step) as i32),
        }
    }
}

/// Supplies normalised CHW batches.
pub trait BatchSource {
    /// Values per sample.
    fn sample_len(&self) -> usize;

    /// Fills `inputs` and `labels` with the batch for `iteration`.
    fn fill(&mut self, iteration: usize, batch_size: usize, inputs: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()>;
}

/// An in-memory pool visited in a fresh seeded permutation every pass.
#[derive(Debug, Clone)]
pub struct ShuffledPool {
    inputs: Vec<f32>,
    labels: Vec<usize>,
    sample_len: usize,
    stream: SeedStream,
    pass: usize,
    order: Vec<usize>,
}

impl ShuffledPool {
    pub fn new(inputs: Vec<f32>, labels: Vec<usize>, sample_len: usize, seed: u64) -> Result<Self> {
        if labels.is_empty() || sample_len == 0 || inputs.len() != labels.len() * sample_len {
            return Err(Error::Shape(format!("{} values cannot hold {} samples of {sample_len}", inputs.len(), labels.len())));
        }
        if labels.iter().any(|&l| l >= CLASSES) {
            return Err(Error::InvalidRecord("label index out of range".into()));
        }
        let mut pool = ShuffledPool { inputs, labels, sample_len, stream: SeedStream::new(seed).named("shuffle"), pass: usize::MAX, order: Vec::new() };
        pool.reshuffle(0);
        Ok(pool)
    }

    /// Normalises cubes with `mean` into a pool.
    pub fn from_cubes(cubes: &[ImageCube], labels: &[usize], mean: &[f32], seed: u64) -> Result<Self> {
        let sample_len = cubes.first().map_or(0, |c| c.data.len());
        ShuffledPool::new(encode_cubes(cubes, mean)?, labels.to_vec(), sample_len, seed)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn reshuffle(&mut self, pass: usize) {
        use rand::seq::SliceRandom;
        if self.pass == pass {
            return;
        }
        self.order = (0..self.labels.len()).collect();
        self.order.shuffle(&mut self.stream.index(pass as u64).rng());
        self.pass = pass;
    }
}

impl BatchSource for ShuffledPool {
    fn sample_len(&self) -> usize {
        self.sample_len
    }

    fn fill(&mut self, iteration: usize, batch_size: usize, inputs: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
        inputs.clear();
        labels.clear();
        let n = self.labels.len();
        for slot in iteration * batch_size..(iteration + 1) * batch_size {
            self.reshuffle(slot / n);
            let i = self.order[slot % n];
            inputs.extend_from_slice(&self.inputs[i * self.sample_len..(i + 1) * self.sample_len]);
            labels.push(self.labels[i]);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub learning_rate: f64,
    pub loss: f64,
    /// Training-batch accuracy in train mode.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub trace: Vec<TracePoint>,
}

/// Trains from a fresh seeded initialisation.
pub fn train(spec: &NetworkSpec, config: &TrainConfig, data: &mut dyn BatchSource) -> Result<TrainOutcome> {
    train_with(spec, config, data, &mut |_, _| Ok(()))
}

/// As [`train`]; `on_checkpoint(iterations_done, params)` fires every
/// `checkpoint_every` iterations.
pub fn train_with(
    spec: &NetworkSpec,
    config: &TrainConfig,
    data: &mut dyn BatchSource,
    on_checkpoint: &mut dyn FnMut(usize, &ParamStore<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let params = ParamStore::init(spec, config.init, config.seed)?;
    resume(spec, config, params, 0, data, on_checkpoint)
}

/// Continues training `params` from iteration `start`.
pub fn resume(
    spec: &NetworkSpec,
    config: &TrainConfig,
    mut params: ParamStore<f32>,
    start: usize,
    data: &mut dyn BatchSource,
    on_checkpoint: &mut dyn FnMut(usize, &ParamStore<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let net = Network::new(spec)?;
    if !params.shapes_match(spec) {
        return Err(Error::Shape("parameters do not match the network".into()));
    }
    if data.sample_len() != net.input_len() {
        return Err(Error::Shape(format!("samples of {} values, network expects {}", data.sample_len(), net.input_len())));
    }
    let dropout_root = SeedStream::new(config.seed).named("dropout");
    let mut trace = Vec::with_capacity(config.iterations.saturating_sub(start));
    let (mut inputs, mut labels) = (Vec::new(), Vec::new());
    for it in start..config.iterations {
        data.fill(it, config.batch_size, &mut inputs, &mut labels)?;
        let (loss, grads, probs) = net
            .loss_and_gradients(&params, &inputs, &labels, Mode::Train(dropout_root.index(it as u64)))
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("training diverged at iteration {it}: {m}")),
                other => other,
            })?;
        let lr = config.learning_rate(it) as f32;
        let (mu, wd) = (config.momentum as f32, config.weight_decay as f32);
        for ((p, v), g) in params.layers.iter_mut().zip(params.velocity.iter_mut()).zip(&grads) {
            for ((w, vw), &gw) in p.weights.iter_mut().zip(v.weights.iter_mut()).zip(&g.weights) {
                *vw = mu * *vw - lr * (gw + wd * *w);
                *w += *vw;
            }
            for ((b, vb), &gb) in p.bias.iter_mut().zip(v.bias.iter_mut()).zip(&g.bias) {
                *vb = mu * *vb - lr * gb;
                *b += *vb;
            }
            if p.weights.iter().chain(&p.bias).any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("training diverged at iteration {it}: non-finite parameter")));
            }
        }
        let correct = argmax_rows(&probs).iter().zip(&labels).filter(|(p, l)| p == l).count();
        trace.push(TracePoint {
            iteration: it,
            learning_rate: lr as f64,
            loss: loss as f64,
            accuracy: correct as f64 / labels.len() as f64,
        });
        if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 {
            on_checkpoint(it + 1, &params)?;
        }
    }
    Ok(TrainOutcome { params, trace })
}

/// Per-channel mean over every pixel of every cube.
pub fn channel_mean(cubes: &[ImageCube]) -> Result<Vec<f32>> {
    let first = cubes.first().ok_or_else(|| Error::InsufficientPool { requested: 1, available: 0 })?;
    let channels = first.channels;
    let mut sums = vec![0.0f64; channels];
    let mut count = 0usize;
    for cube in cubes {
        if cube.channels != channels {
            return Err(Error::Shape("cubes differ in channel count".into()));
        }
        for px in cube.data.chunks_exact(channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        count += cube.height * cube.width;
    }
    Ok(sums.into_iter().map(|s| (s / count as f64) as f32).collect())
}

/// Concatenates mean-subtracted CHW copies of equally shaped cubes.
pub fn encode_cubes(cubes: &[ImageCube], mean: &[f32]) -> Result<Vec<f32>> {
    let Some(first) = cubes.first() else { return Ok(Vec::new()) };
    let len = first.data.len();
    let mut out = vec![0.0f32; len * cubes.len()];
    for (cube, dst) in cubes.iter().zip(out.chunks_exact_mut(len)) {
        if (cube.height, cube.width, cube.channels) != (first.height, first.width, first.channels) {
            return Err(Error::Shape("cubes differ in shape".into()));
        }
        cube.write_chw(mean, dst);
    }
    Ok(out)
}

pub fn argmax_rows(probs: &[f32]) -> Vec<usize> {
    probs.chunks_exact(CLASSES).map(|p| if p[1] > p[0] { 1 } else { 0 }).collect()
}

const PREDICT_CHUNK: usize = 64;

/// Eval-mode class probabilities, `[p(not interested), p(interested)]` per cube.
pub fn predict(model: &Checkpoint, cubes: &[ImageCube]) -> Result<Vec<[f32; 2]>> {
    let net = Network::new(&model.spec)?;
    let want = model.spec.input;
    let mut out = Vec::with_capacity(cubes.len());
    for chunk in cubes.chunks(PREDICT_CHUNK) {
        for c in chunk {
            if (c.height, c.width, c.channels) != (want.height, want.width, want.channels) {
                return Err(Error::Shape(format!(
                    "cube {}×{}×{} does not match network input {}×{}×{}",
                    c.height, c.width, c.channels, want.height, want.width, want.channels
                )));
            }
        }
        let input = encode_cubes(chunk, &model.input_mean)?;
        let fwd = net.forward(&model.params, &input, Mode::Eval)?;
        out.extend(fwd.probabilities().chunks_exact(CLASSES).map(|p| [p[0], p[1]]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pool(n: usize, len: usize) -> ShuffledPool {
        let inputs = (0..n * len).map(|i| ((i * 7919) % 101) as f32 / 101.0 - 0.5).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        ShuffledPool::new(inputs, labels, len, 5).unwrap()
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let cfg = TrainConfig { iterations: 0, batch_size: 4, ..TrainConfig::default() };
        let mut pool = toy_pool(8, spec.input_shape().len());
        let out = train(&spec, &cfg, &mut pool).unwrap();
        assert_eq!(out.params, ParamStore::init(&spec, cfg.init, cfg.seed).unwrap());
        assert!(out.trace.is_empty());
    }

    #[test]
    fn every_pass_visits_each_sample_once() {
        let mut pool = toy_pool(10, 1);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        let mut seen = Vec::new();
        for it in 0..5 {
            pool.fill(it, 4, &mut x, &mut y).unwrap();
            seen.extend(x.iter().map(|v| v.to_bits()));
        }
        for pass in seen.chunks(10) {
            let mut p = pass.to_vec();
            p.sort();
            p.dedup();
            assert_eq!(p.len(), 10);
        }
    }

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig { base_lr: 0.01, lr_decay: 0.1, lr_step: 10, ..TrainConfig::default() };
        assert_eq!(cfg.learning_rate(9), 0.01);
        assert!((cfg.learning_rate(10) - 0.001).abs() < 1e-15);
        assert!((cfg.learning_rate(25) - 0.0001).abs() < 1e-15);
        assert!(TrainConfig { batch_size: 0, ..cfg.clone() }.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let cfg = TrainConfig { iterations: 50, batch_size: 4, base_lr: 1e30, momentum: 0.0, init: Init::He, ..TrainConfig::default() };
        let mut pool = toy_pool(8, spec.input_shape().len());
        match train(&spec, &cfg, &mut pool) {
            Err(Error::Numeric(m)) => assert!(m.contains("diverged"), "{m}"),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.trace.len())),
        }
    }

    #[test]
    fn checkpoints_fire_on_schedule() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let cfg = TrainConfig { iterations: 5, batch_size: 2, checkpoint_every: 2, ..TrainConfig::default() };
        let mut pool = toy_pool(6, spec.input_shape().len());
        let mut fired = Vec::new();
        train_with(&spec, &cfg, &mut pool, &mut |it, _| {
            fired.push(it);
            Ok(())
        })
        .unwrap();
        assert_eq!(fired, vec![2, 4]);
    }

    #[test]
    fn resuming_matches_uninterrupted_run() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let cfg = TrainConfig { iterations: 6, batch_size: 3, init: Init::He, ..TrainConfig::default() };
        let len = spec.input_shape().len();
        let full = train(&spec, &cfg, &mut toy_pool(7, len)).unwrap();
        let half = train(&spec, &TrainConfig { iterations: 3, ..cfg.clone() }, &mut toy_pool(7, len)).unwrap();
        let rest = resume(&spec, &cfg, half.params, 3, &mut toy_pool(7, len), &mut |_, _| Ok(())).unwrap();
        assert_eq!(rest.params, full.params);
    }
}
