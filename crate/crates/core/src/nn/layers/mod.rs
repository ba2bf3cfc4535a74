//! Layer kernels operating on flat NCHW batches.

pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod lrn;
pub mod pool;
pub mod softmax;
