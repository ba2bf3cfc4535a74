use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;
use crate::nn::spec::{conv_out_extent, Shape3};
use crate::nn::tensor::Tensor;

/// Max pooling without padding; `window > stride` gives overlapping pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub input: Shape3,
    pub window: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn new(input: Shape3, window: usize, stride: usize) -> Result<Self> {
        match (
            conv_out_extent(input.height, window, stride, 0),
            conv_out_extent(input.width, window, stride, 0),
        ) {
            (Some(out_h), Some(out_w)) => Ok(PoolGeometry { input, window, stride, out_h, out_w }),
            _ => Err(Error::Shape(format!(
                "pool window {window} stride {stride} does not fit {}x{}",
                input.height, input.width
            ))),
        }
    }

    pub fn output(&self) -> Shape3 {
        Shape3::new(self.input.channels, self.out_h, self.out_w)
    }

    /// Pooled values and, per output, the offset (within its sample) of the
    /// first maximum in row-major window order.
    pub fn forward<T: Scalar>(&self, input: &[T], batch: usize) -> (Vec<T>, Vec<u32>) {
        let (in_len, out_len) = (self.input.len(), self.output().len());
        let (h, w) = (self.input.height, self.input.width);
        let mut out = vec![T::zero(); batch * out_len];
        let mut arg = vec![0u32; batch * out_len];
        out.par_chunks_mut(out_len)
            .zip(arg.par_chunks_mut(out_len))
            .zip(input.par_chunks(in_len))
            .for_each(|((dst, idx), src)| {
                for c in 0..self.input.channels {
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            let mut best = c * h * w + oy * self.stride * w + ox * self.stride;
                            for ky in 0..self.window {
                                for kx in 0..self.window {
                                    let i = c * h * w + (oy * self.stride + ky) * w + ox * self.stride + kx;
                                    if src[i] > src[best] {
                                        best = i;
                                    }
                                }
                            }
                            let o = (c * self.out_h + oy) * self.out_w + ox;
                            dst[o] = src[best];
                            idx[o] = best as u32;
                        }
                    }
                }
            });
        (out, arg)
    }

    pub fn backward<T: Scalar>(&self, argmax: &[u32], out_grad: &[T], batch: usize) -> Vec<T> {
        let (in_len, out_len) = (self.input.len(), self.output().len());
        let mut grad = vec![T::zero(); batch * in_len];
        grad.par_chunks_mut(in_len)
            .zip(argmax.par_chunks(out_len).zip(out_grad.par_chunks(out_len)))
            .for_each(|(dx, (idx, dy))| {
                for (&i, &g) in idx.iter().zip(dy) {
                    dx[i as usize] += g;
                }
            });
        grad
    }
}

pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, h, w) = input.nchw()?;
    let g = PoolGeometry::new(Shape3::new(c, h, w), window, stride)?;
    let (out, arg) = g.forward(input.data(), n);
    Ok((Tensor::new(vec![n, c, g.out_h, g.out_w], out)?, arg))
}

pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    window: usize,
    stride: usize,
    argmax: &[u32],
    out_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape[..] else {
        return Err(Error::Shape(format!("expected a 4-d input shape, got {input_shape:?}")));
    };
    let g = PoolGeometry::new(Shape3::new(c, h, w), window, stride)?;
    if out_grad.len() != n * g.output().len() || argmax.len() != out_grad.len() {
        return Err(Error::Shape("pool gradient does not match the forward pass".into()));
    }
    Tensor::new(input_shape.to_vec(), g.backward(argmax, out_grad.data(), n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_constant_output() {
        let t = Tensor::<f32>::from_fn(vec![1, 2, 7, 7], |_| 3.5);
        let (out, _) = maxpool2d(&t, 3, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn counting_grid_window_three_stride_one() {
        let t = Tensor::<f32>::from_fn(vec![1, 1, 4, 4], |i| (i + 1) as f32);
        let (out, _) = maxpool2d(&t, 3, 1).unwrap();
        assert_eq!(out.data(), &[11.0, 12.0, 15.0, 16.0]);
    }

    #[test]
    fn gradient_only_reaches_maxima() {
        let t = Tensor::<f64>::from_fn(vec![1, 1, 4, 4], |i| ((i * 7) % 16) as f64);
        let (out, arg) = maxpool2d(&t, 2, 2).unwrap();
        let ones = Tensor::from_fn(out.shape().to_vec(), |_| 1.0);
        let g = maxpool2d_backward(t.shape(), 2, 2, &arg, &ones).unwrap();
        for (i, &v) in g.data().iter().enumerate() {
            let is_max = arg.contains(&(i as u32));
            assert_eq!(v, if is_max { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn ties_route_to_first_in_row_major_order() {
        let t = Tensor::<f32>::from_fn(vec![1, 1, 2, 2], |_| 1.0);
        let (_, arg) = maxpool2d(&t, 2, 2).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn oversized_window_rejected() {
        let t = Tensor::<f32>::zeros(vec![1, 1, 2, 2]);
        assert!(maxpool2d(&t, 3, 1).is_err());
    }
}
