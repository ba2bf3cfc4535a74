//! 2-D convolution through a patch matrix (im2col) and GEMM.
//!
//! For one sample the patch matrix has one row per (input channel, kernel
//! row, kernel column) and one column per output position, so the forward
//! pass is `out = W · cols + b` with `W` shaped `[out_channels, C·k·k]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::scalar::{gemm, Mat, Scalar};
use crate::nn::spec::{conv_out_extent, Shape3};
use crate::nn::tensor::Tensor;

/// Output rows per work unit of the weight-gradient reduction. Fixed so the
/// summation order never depends on the thread count.
const WEIGHT_ROWS_PER_TASK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: Shape3,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: Shape3, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        let out_h = conv_out_extent(input.height, kernel, stride, pad);
        let out_w = conv_out_extent(input.width, kernel, stride, pad);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if out_channels > 0 => {
                Ok(ConvGeometry { input, out_channels, kernel, stride, pad, out_h, out_w })
            }
            _ => Err(Error::Shape(format!(
                "convolution k={kernel} s={stride} p={pad} has no output on {}x{}",
                input.height, input.width
            ))),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.input.channels * self.kernel * self.kernel
    }

    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn output(&self) -> Shape3 {
        Shape3::new(self.out_channels, self.out_h, self.out_w)
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    /// Fills `cols` (`patch_len × out_plane`) from one CHW sample.
    pub fn im2col<T: Scalar>(&self, input: &[T], cols: &mut [T]) {
        let (h, w) = (self.input.height as isize, self.input.width as isize);
        let k = self.kernel;
        let plane = self.out_plane();
        for c in 0..self.input.channels {
            let src = &input[c * (h * w) as usize..(c + 1) * (h * w) as usize];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_h {
                        let y = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if y < 0 || y >= h {
                            line.fill(T::zero());
                            continue;
                        }
                        let src_row = &src[(y * w) as usize..((y + 1) * w) as usize];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let x = (ox * self.stride + kx) as isize - self.pad as isize;
                            *v = if x < 0 || x >= w { T::zero() } else { src_row[x as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Accumulates a patch-matrix gradient back onto one CHW sample.
    pub fn col2im<T: Scalar>(&self, cols: &[T], input_grad: &mut [T]) {
        let (h, w) = (self.input.height as isize, self.input.width as isize);
        let k = self.kernel;
        let plane = self.out_plane();
        for c in 0..self.input.channels {
            let dst = &mut input_grad[c * (h * w) as usize..(c + 1) * (h * w) as usize];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_h {
                        let y = (oy * self.stride + ky) as isize - self.pad as isize;
                        if y < 0 || y >= h {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let x = (ox * self.stride + kx) as isize - self.pad as isize;
                            if x >= 0 && x < w {
                                dst[(y * w + x) as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Forward pass over a batch of CHW samples.
    pub fn forward<T: Scalar>(&self, input: &[T], weights: &[T], bias: &[T], batch: usize) -> Vec<T> {
        let (in_len, out_len) = (self.input.len(), self.output().len());
        debug_assert_eq!(input.len(), batch * in_len);
        let (pl, op) = (self.patch_len(), self.out_plane());
        let mut out = vec![T::zero(); batch * out_len];
        out.par_chunks_mut(out_len).zip(input.par_chunks(in_len)).for_each_init(
            || vec![T::zero(); pl * op],
            |cols, (dst, src)| {
                self.im2col(src, cols);
                gemm(T::one(), Mat::new(weights, self.out_channels, pl), Mat::new(cols, pl, op), T::zero(), dst);
                for (row, &b) in dst.chunks_exact_mut(op).zip(bias) {
                    row.iter_mut().for_each(|v| *v += b);
                }
            },
        );
        out
    }

    /// Gradients with respect to input, weights and bias.
    pub fn backward<T: Scalar>(&self, input: &[T], weights: &[T], out_grad: &[T], batch: usize) -> ConvGrads<T> {
        let (in_len, out_len) = (self.input.len(), self.output().len());
        let (pl, op, oc) = (self.patch_len(), self.out_plane(), self.out_channels);

        let mut cols = vec![T::zero(); batch * pl * op];
        cols.par_chunks_mut(pl * op).zip(input.par_chunks(in_len)).for_each(|(dst, src)| self.im2col(src, dst));

        let mut weight_grad = vec![T::zero(); oc * pl];
        weight_grad.par_chunks_mut(WEIGHT_ROWS_PER_TASK * pl).enumerate().for_each(|(task, dst)| {
            let r0 = task * WEIGHT_ROWS_PER_TASK;
            let rows = dst.len() / pl;
            for n in 0..batch {
                let dy = &out_grad[n * out_len + r0 * op..n * out_len + (r0 + rows) * op];
                let beta = if n == 0 { T::zero() } else { T::one() };
                gemm(T::one(), Mat::new(dy, rows, op), Mat::t(&cols[n * pl * op..(n + 1) * pl * op], pl, op), beta, dst);
            }
        });

        let mut bias_grad = vec![T::zero(); oc];
        for n in 0..batch {
            for (c, g) in bias_grad.iter_mut().enumerate() {
                let row = &out_grad[n * out_len + c * op..n * out_len + (c + 1) * op];
                *g += row.iter().copied().sum::<T>();
            }
        }

        let mut input_grad = vec![T::zero(); batch * in_len];
        input_grad.par_chunks_mut(in_len).zip(out_grad.par_chunks(out_len)).for_each_init(
            || vec![T::zero(); pl * op],
            |dcols, (dx, dy)| {
                gemm(T::one(), Mat::t(weights, oc, pl), Mat::new(dy, oc, op), T::zero(), dcols);
                self.col2im(dcols, dx);
            },
        );

        ConvGrads { input: input_grad, weights: weight_grad, bias: bias_grad }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn geometry_for<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, stride: usize, pad: usize) -> Result<(ConvGeometry, usize)> {
    let (n, c, h, w) = input.nchw()?;
    let (oc, wc, kh, kw) = weights.nchw()?;
    if wc != c || kh != kw {
        return Err(Error::Shape(format!(
            "kernel {:?} does not match input channels {c} (square kernels only)",
            weights.shape()
        )));
    }
    Ok((ConvGeometry::new(Shape3::new(c, h, w), oc, kh, stride, pad)?, n))
}

/// `out[n, c, y, x] = bias[c] + Σ weights[c, :, :, :] · patch(n, y, x)`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T], stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (g, n) = geometry_for(input, weights, stride, pad)?;
    if bias.len() != g.out_channels {
        return Err(Error::Shape(format!("bias has {} entries for {} channels", bias.len(), g.out_channels)));
    }
    let out = g.forward(input.data(), weights.data(), bias, n);
    Tensor::new(vec![n, g.out_channels, g.out_h, g.out_w], out)
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_grad: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (g, n) = geometry_for(input, weights, stride, pad)?;
    if out_grad.shape() != [n, g.out_channels, g.out_h, g.out_w] {
        return Err(Error::Shape(format!("output gradient shape {:?}", out_grad.shape())));
    }
    Ok(g.backward(input.data(), weights.data(), out_grad.data(), n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let input = Tensor::<f64>::from_fn(vec![1, 1, 4, 5], |i| i as f64 * 0.5 - 3.0);
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d(&input, &w, &[0.0], 1, 0).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_input_gives_bias() {
        let input = Tensor::<f32>::zeros(vec![2, 3, 6, 6]);
        let w = Tensor::from_fn(vec![4, 3, 3, 3], |i| i as f32);
        let out = conv2d(&input, &w, &[1.0, -2.0, 0.5, 7.0], 2, 1).unwrap();
        assert_eq!(out.shape(), &[2, 4, 3, 3]);
        for (i, v) in out.data().iter().enumerate() {
            assert_eq!(*v, [1.0, -2.0, 0.5, 7.0][(i / 9) % 4]);
        }
    }

    #[test]
    fn shape_errors() {
        let input = Tensor::<f32>::zeros(vec![1, 3, 4, 4]);
        let w = Tensor::<f32>::zeros(vec![2, 2, 3, 3]);
        assert!(conv2d(&input, &w, &[0.0; 2], 1, 0).is_err());
        let w = Tensor::<f32>::zeros(vec![2, 3, 7, 7]);
        assert!(conv2d(&input, &w, &[0.0; 2], 1, 0).is_err());
        let w = Tensor::<f32>::zeros(vec![2, 3, 3, 3]);
        assert!(conv2d(&input, &w, &[0.0; 3], 1, 0).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeometry::new(Shape3::new(2, 5, 6), 1, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..g.input.len()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let c: Vec<f64> = (0..g.patch_len() * g.out_plane()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut cols = vec![0.0; c.len()];
        g.im2col(&x, &mut cols);
        let mut back = vec![0.0; x.len()];
        g.col2im(&c, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
