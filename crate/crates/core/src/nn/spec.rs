//! Network topology and shape inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample activation shape, channels first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Input extent of a cube: height × width × 3k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    Lrn { size: usize, k: f64, alpha: f64, beta: f64 },
    Dense { units: usize },
    Dropout { rate: f64 },
    SoftmaxXent,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Lrn { .. } => "lrn",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::SoftmaxXent => "softmax_xent",
        }
    }
}

pub const DEFAULT_LRN: LayerSpec = LayerSpec::Lrn { size: 5, k: 2.0, alpha: 1e-4, beta: 0.75 };

pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
}

pub const CLASSES: usize = 2;

impl NetworkSpec {
    /// The AlexNet-style network: five convolutions and three dense layers,
    /// kernel sizes independent of the input size.
    pub fn alexnet(height: usize, width: usize, frames: usize) -> Self {
        use LayerSpec::*;
        let pool = MaxPool { window: 3, stride: 2 };
        NetworkSpec {
            input: InputShape { height, width, channels: 3 * frames },
            layers: vec![
                Conv { out_channels: 96, kernel: 11, stride: 4, pad: 2 },
                Relu,
                DEFAULT_LRN,
                pool,
                Conv { out_channels: 256, kernel: 5, stride: 1, pad: 2 },
                Relu,
                DEFAULT_LRN,
                pool,
                Conv { out_channels: 384, kernel: 3, stride: 1, pad: 1 },
                Relu,
                Conv { out_channels: 384, kernel: 3, stride: 1, pad: 1 },
                Relu,
                Conv { out_channels: 256, kernel: 3, stride: 1, pad: 1 },
                Relu,
                pool,
                Dense { units: 4096 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { units: 4096 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { units: CLASSES },
                SoftmaxXent,
            ],
        }
    }

    /// Two convolutions (16 and 32 channels) and one 128-unit dense layer,
    /// for CPU-scale runs.
    pub fn tiny(height: usize, width: usize, frames: usize) -> Self {
        use LayerSpec::*;
        let pool = MaxPool { window: 3, stride: 2 };
        NetworkSpec {
            input: InputShape { height, width, channels: 3 * frames },
            layers: vec![
                Conv { out_channels: 16, kernel: 11, stride: 4, pad: 2 },
                Relu,
                DEFAULT_LRN,
                pool,
                Conv { out_channels: 32, kernel: 5, stride: 1, pad: 2 },
                Relu,
                DEFAULT_LRN,
                pool,
                Dense { units: 128 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { units: CLASSES },
                SoftmaxXent,
            ],
        }
    }

    pub fn preset(name: &str, height: usize, width: usize, frames: usize) -> Result<Self> {
        match name {
            "alexnet" => Ok(Self::alexnet(height, width, frames)),
            "tiny" => Ok(Self::tiny(height, width, frames)),
            other => Err(Error::Config(format!("unknown architecture {other:?} (expected alexnet or tiny)"))),
        }
    }

    pub fn input_shape(&self) -> Shape3 {
        Shape3::new(self.input.channels, self.input.height, self.input.width)
    }

    /// Output shape of every layer, validating the topology on the way.
    pub fn shapes(&self) -> Result<Vec<Shape3>> {
        let bad = |i: usize, m: String| Err(Error::Shape(format!("layer {i}: {m}")));
        let mut shape = self.input_shape();
        if shape.is_empty() {
            return Err(Error::Shape("empty input".into()));
        }
        if self.input.channels % 3 != 0 {
            return Err(Error::Shape(format!("input channels {} not a multiple of 3", self.input.channels)));
        }
        let mut flat = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, pad } => {
                    if flat {
                        return bad(i, "convolution after a dense layer".into());
                    }
                    if out_channels == 0 || stride == 0 {
                        return bad(i, "convolution needs positive channels and stride".into());
                    }
                    match (
                        conv_out_extent(shape.height, kernel, stride, pad),
                        conv_out_extent(shape.width, kernel, stride, pad),
                    ) {
                        (Some(h), Some(w)) => Shape3::new(out_channels, h, w),
                        _ => return bad(i, format!("kernel {kernel} does not fit {}x{}", shape.height, shape.width)),
                    }
                }
                LayerSpec::MaxPool { window, stride } => {
                    if flat {
                        return bad(i, "pooling after a dense layer".into());
                    }
                    if stride == 0 || window == 0 {
                        return bad(i, "pooling needs positive window and stride".into());
                    }
                    match (
                        conv_out_extent(shape.height, window, stride, 0),
                        conv_out_extent(shape.width, window, stride, 0),
                    ) {
                        (Some(h), Some(w)) => Shape3::new(shape.channels, h, w),
                        _ => return bad(i, format!("window {window} larger than {}x{}", shape.height, shape.width)),
                    }
                }
                LayerSpec::Lrn { size, k, alpha, beta } => {
                    if size == 0 || k <= 0.0 || alpha < 0.0 || beta < 0.0 {
                        return bad(i, "LRN needs size >= 1, k > 0, alpha >= 0, beta >= 0".into());
                    }
                    shape
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return bad(i, "dense layer with zero units".into());
                    }
                    flat = true;
                    Shape3::new(units, 1, 1)
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(i, format!("dropout rate {rate} outside [0, 1)"));
                    }
                    shape
                }
                LayerSpec::Relu => shape,
                LayerSpec::SoftmaxXent => {
                    if i + 1 != self.layers.len() {
                        return bad(i, "softmax must be the last layer".into());
                    }
                    if shape.len() != CLASSES || !matches!(self.layers.get(i.wrapping_sub(1)), Some(LayerSpec::Dense { .. })) {
                        return bad(i, format!("softmax must follow a {CLASSES}-unit dense layer"));
                    }
                    shape
                }
            };
            out.push(shape);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::SoftmaxXent)) {
            return Err(Error::Shape("network must end in a softmax layer".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Input shape of layer `i`.
    pub fn layer_inputs(&self) -> Result<Vec<Shape3>> {
        let shapes = self.shapes()?;
        let mut inputs = vec![self.input_shape()];
        inputs.extend_from_slice(&shapes[..shapes.len() - 1]);
        Ok(inputs)
    }

    /// `(weight count, bias count)` per layer.
    pub fn param_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let inputs = self.layer_inputs()?;
        Ok(self
            .layers
            .iter()
            .zip(&inputs)
            .map(|(layer, input)| match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    (out_channels * input.channels * kernel * kernel, out_channels)
                }
                LayerSpec::Dense { units } => (units * input.len(), units),
                _ => (0, 0),
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_sizes()?.iter().map(|(w, b)| w + b).sum())
    }
}
