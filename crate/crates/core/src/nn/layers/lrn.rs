//! Across-channel local response normalisation:
//! `out_c = in_c / (k + alpha/size · Σ_{c' near c} in_{c'}²)^beta`.

use rayon::prelude::*;

use crate::nn::scalar::Scalar;
use crate::nn::spec::Shape3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lrn {
    pub size: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Lrn {
    /// Channel window `[lo, hi)` centred on `c`.
    fn window(&self, c: usize, channels: usize) -> (usize, usize) {
        let before = (self.size - 1) / 2;
        let after = self.size - 1 - before;
        (c.saturating_sub(before), (c + after + 1).min(channels))
    }

    /// Returns the output and the per-element denominator base (`scale`).
    pub fn forward<T: Scalar>(&self, shape: Shape3, input: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
        let len = shape.len();
        let plane = shape.height * shape.width;
        let (k, a, b) = (T::of(self.k), T::of(self.alpha / self.size as f64), T::of(self.beta));
        let mut out = vec![T::zero(); batch * len];
        let mut scale = vec![T::zero(); batch * len];
        out.par_chunks_mut(len)
            .zip(scale.par_chunks_mut(len))
            .zip(input.par_chunks(len))
            .for_each(|((dst, sc), src)| {
                for p in 0..plane {
                    for c in 0..shape.channels {
                        let (lo, hi) = self.window(c, shape.channels);
                        let sum: T = (lo..hi).map(|j| src[j * plane + p] * src[j * plane + p]).sum();
                        let s = k + a * sum;
                        sc[c * plane + p] = s;
                        dst[c * plane + p] = src[c * plane + p] * s.powf(-b);
                    }
                }
            });
        (out, scale)
    }

    pub fn backward<T: Scalar>(&self, shape: Shape3, input: &[T], scale: &[T], out_grad: &[T], batch: usize) -> Vec<T> {
        let len = shape.len();
        let plane = shape.height * shape.width;
        let b = T::of(self.beta);
        let coeff = T::of(2.0 * self.alpha * self.beta / self.size as f64);
        let mut grad = vec![T::zero(); batch * len];
        grad.par_chunks_mut(len)
            .zip(input.par_chunks(len).zip(scale.par_chunks(len)).zip(out_grad.par_chunks(len)))
            .for_each_init(
                || vec![T::zero(); shape.channels],
                |acc, (dx, ((x, sc), dy))| {
                    for p in 0..plane {
                        acc.iter_mut().for_each(|v| *v = T::zero());
                        for c in 0..shape.channels {
                            let i = c * plane + p;
                            let common = dy[i] * x[i] * sc[i].powf(-b - T::one());
                            let (lo, hi) = self.window(c, shape.channels);
                            for slot in &mut acc[lo..hi] {
                                *slot += common;
                            }
                        }
                        for c in 0..shape.channels {
                            let i = c * plane + p;
                            dx[i] = dy[i] * sc[i].powf(-b) - coeff * x[i] * acc[c];
                        }
                    }
                },
            );
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_oracle(l: &Lrn, shape: Shape3, x: &[f64]) -> Vec<f64> {
        let plane = shape.height * shape.width;
        let half = (l.size - 1) / 2;
        let mut out = vec![0.0; x.len()];
        for c in 0..shape.channels {
            for p in 0..plane {
                let mut sum = 0.0;
                for j in 0..shape.channels {
                    if j + half >= c && j <= c + (l.size - 1 - half) {
                        sum += x[j * plane + p].powi(2);
                    }
                }
                out[c * plane + p] = x[c * plane + p] / (l.k + l.alpha / l.size as f64 * sum).powf(l.beta);
            }
        }
        out
    }

    #[test]
    fn zero_alpha_divides_by_k_pow_beta() {
        let l = Lrn { size: 5, k: 2.0, alpha: 0.0, beta: 0.75 };
        let shape = Shape3::new(3, 2, 2);
        let x: Vec<f64> = (0..12).map(|i| i as f64 - 4.0).collect();
        let (out, _) = l.forward(shape, &x, 1);
        for (o, v) in out.iter().zip(&x) {
            assert!((o - v / 2f64.powf(0.75)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_single_channel() {
        let l = Lrn { size: 1, k: 2.0, alpha: 1.0, beta: 0.75 };
        let (out, _) = l.forward(Shape3::new(1, 1, 1), &[0.0f64], 1);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let l = Lrn { size: 5, k: 2.0, alpha: 0.7, beta: 0.75 };
        let shape = Shape3::new(7, 3, 2);
        let x: Vec<f64> = (0..2 * shape.len()).map(|i| ((i * 29 % 17) as f64 - 8.0) / 3.0).collect();
        let (out, _) = l.forward(shape, &x, 2);
        for n in 0..2 {
            let want = scalar_oracle(&l, shape, &x[n * shape.len()..(n + 1) * shape.len()]);
            for (a, b) in out[n * shape.len()..].iter().zip(&want) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
