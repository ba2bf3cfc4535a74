use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::scalar::{gemm, Mat, Scalar};
use crate::nn::tensor::Tensor;

const ROWS_PER_TASK: usize = 16;

/// Fully connected layer, `y = W x + b` with `W` shaped `[units, inputs]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
}

impl Dense {
    pub fn forward<T: Scalar>(&self, input: &[T], weights: &[T], bias: &[T], batch: usize) -> Vec<T> {
        let mut out = vec![T::zero(); batch * self.units];
        out.par_chunks_mut(ROWS_PER_TASK * self.units)
            .zip(input.par_chunks(ROWS_PER_TASK * self.inputs))
            .for_each(|(y, x)| {
                let rows = y.len() / self.units;
                gemm(T::one(), Mat::new(x, rows, self.inputs), Mat::t(weights, self.units, self.inputs), T::zero(), y);
                for row in y.chunks_exact_mut(self.units) {
                    row.iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
                }
            });
        out
    }

    /// `(input grad, weight grad, bias grad)`.
    pub fn backward<T: Scalar>(&self, input: &[T], weights: &[T], out_grad: &[T], batch: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut dx = vec![T::zero(); batch * self.inputs];
        dx.par_chunks_mut(ROWS_PER_TASK * self.inputs)
            .zip(out_grad.par_chunks(ROWS_PER_TASK * self.units))
            .for_each(|(dx, dy)| {
                let rows = dy.len() / self.units;
                gemm(T::one(), Mat::new(dy, rows, self.units), Mat::new(weights, self.units, self.inputs), T::zero(), dx);
            });

        let mut dw = vec![T::zero(); self.units * self.inputs];
        dw.par_chunks_mut(ROWS_PER_TASK * self.inputs).enumerate().for_each(|(task, dst)| {
            let r0 = task * ROWS_PER_TASK;
            let rows = dst.len() / self.inputs;
            weight_grad_rows(&out_grad[r0..], self.units, rows, input, batch, self.inputs, dst);
        });

        let mut db = vec![T::zero(); self.units];
        for row in out_grad.chunks_exact(self.units) {
            db.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
        }
        (dx, dw, db)
    }
}

/// `dst (rows × inputs) = dyᵀ · x` for the first `rows` units of `dy`, where
/// `dy` is a `batch × units` matrix starting at the first selected unit.
fn weight_grad_rows<T: Scalar>(dy: &[T], units: usize, rows: usize, x: &[T], batch: usize, inputs: usize, dst: &mut [T]) {
    if rows == 0 || batch == 0 {
        dst.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    // element (r, n) of dyᵀ lives at data[n * units + r]
    assert!(dy.len() >= (batch - 1) * units + rows);
    assert!(x.len() >= batch * inputs && dst.len() >= rows * inputs);
    // SAFETY: bounds asserted above for the (1, units) strides of dyᵀ and
    // the row-major strides of x and dst.
    unsafe {
        T::gemm_raw(
            rows,
            batch,
            inputs,
            T::one(),
            dy.as_ptr(),
            1,
            units as isize,
            x.as_ptr(),
            inputs as isize,
            1,
            T::zero(),
            dst.as_mut_ptr(),
            inputs as isize,
            1,
        )
    }
}

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<(Dense, usize)> {
    let batch = input.shape().first().copied().unwrap_or(0);
    let inputs = if batch == 0 { 0 } else { input.len() / batch };
    match weights.shape() {
        &[units, w_in] if w_in == inputs && bias.len() == units => Ok((Dense { inputs, units }, batch)),
        other => Err(Error::Shape(format!(
            "dense weights {other:?} / bias {} do not fit {inputs} inputs",
            bias.len()
        ))),
    }
}

/// Affine map over the trailing (flattened) dimensions of `input`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (d, batch) = check(input, weights, bias)?;
    Tensor::new(vec![batch, d.units], d.forward(input.data(), weights.data(), bias, batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_loops_forward_and_backward() {
        let d = Dense { inputs: 3, units: 20 };
        let batch = 5;
        let x: Vec<f64> = (0..batch * 3).map(|i| i as f64 * 0.3 - 2.0).collect();
        let w: Vec<f64> = (0..60).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.1).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y = d.forward(&x, &w, &b, batch);
        for n in 0..batch {
            for u in 0..20 {
                let want: f64 = b[u] + (0..3).map(|i| w[u * 3 + i] * x[n * 3 + i]).sum::<f64>();
                assert!((y[n * 20 + u] - want).abs() < 1e-12);
            }
        }
        let dy: Vec<f64> = (0..batch * 20).map(|i| ((i * 5 % 9) as f64) - 4.0).collect();
        let (dx, dw, db) = d.backward(&x, &w, &dy, batch);
        for u in 0..20 {
            for i in 0..3 {
                let want: f64 = (0..batch).map(|n| dy[n * 20 + u] * x[n * 3 + i]).sum();
                assert!((dw[u * 3 + i] - want).abs() < 1e-12);
            }
            let want: f64 = (0..batch).map(|n| dy[n * 20 + u]).sum();
            assert!((db[u] - want).abs() < 1e-12);
        }
        for n in 0..batch {
            for i in 0..3 {
                let want: f64 = (0..20).map(|u| dy[n * 20 + u] * w[u * 3 + i]).sum();
                assert!((dx[n * 3 + i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_api_checks_shapes() {
        let x = Tensor::<f32>::zeros(vec![2, 4]);
        let w = Tensor::<f32>::zeros(vec![3, 5]);
        assert!(dense(&x, &w, &[0.0; 3]).is_err());
        let w = Tensor::<f32>::zeros(vec![3, 4]);
        assert_eq!(dense(&x, &w, &[1.0; 3]).unwrap().data(), &[1.0; 6]);
    }
}
