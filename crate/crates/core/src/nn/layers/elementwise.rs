use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;
use crate::rng::SeedStream;

pub fn relu<T: Scalar>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Routes the gradient through units whose output was positive.
pub fn relu_backward<T: Scalar>(output: &[T], out_grad: &[T]) -> Vec<T> {
    output.iter().zip(out_grad).map(|(&y, &g)| if y > T::zero() { g } else { T::zero() }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    /// Identity.
    Eval,
    /// Inverted dropout with randomness keyed by `(stream, unit index)`.
    Train(SeedStream),
}

/// Returns the output and the per-unit multiplier (0 or `1 / (1 - rate)`),
/// or an empty multiplier in eval mode.
pub fn dropout<T: Scalar>(input: &[T], rate: f64, mode: DropoutMode) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    match mode {
        DropoutMode::Eval => Ok((input.to_vec(), Vec::new())),
        DropoutMode::Train(stream) => {
            let keep = T::of(1.0 / (1.0 - rate));
            let mask: Vec<T> = (0..input.len())
                .map(|i| if stream.uniform_at(i as u64) < rate { T::zero() } else { keep })
                .collect();
            let out = input.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
            Ok((out, mask))
        }
    }
}

pub fn dropout_backward<T: Scalar>(mask: &[T], out_grad: &[T]) -> Vec<T> {
    if mask.is_empty() {
        return out_grad.to_vec();
    }
    mask.iter().zip(out_grad).map(|(&m, &g)| m * g).collect()
}
