//! Convolutional network built from scratch: layer kernels, network
//! assembly, SGD training and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod scalar;
pub mod spec;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use network::{Gradients, Init, LayerParams, Mode, Network, ParamStore};
pub use scalar::Scalar;
pub use spec::{InputShape, LayerSpec, NetworkSpec, Shape3, CLASSES};
pub use tensor::Tensor;
pub use train::{predict, train, BatchSource, ShuffledPool, TracePoint, TrainConfig, TrainOutcome};
