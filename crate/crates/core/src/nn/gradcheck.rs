//! Central finite-difference verification of backpropagation in 64-bit mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Mode, Network, ParamStore, Regions};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const STEP: f64 = 1e-3;

/// Inputs closer to zero than this are pushed out to it.
pub const INPUT_NUDGE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradMismatch {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameters whose ±step probes changed a ReLU state or pool argmax;
    /// these are differenced inside the unperturbed regions instead.
    pub kink_crossings: usize,
    /// Every parameter above tolerance, in layer/kind/index order.
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Pushes values in `(-INPUT_NUDGE, INPUT_NUDGE)` out to `±INPUT_NUDGE`.
pub fn nudge_off_zero(input: &mut [f64]) {
    for v in input {
        if v.abs() < INPUT_NUDGE {
            *v = if *v < 0.0 { -INPUT_NUDGE } else { INPUT_NUDGE };
        }
    }
}

fn slot(s: &mut ParamStore<f64>, layer: usize, kind: ParamKind, i: usize) -> &mut f64 {
    match kind {
        ParamKind::Weight => &mut s.layers[layer].weights[i],
        ParamKind::Bias => &mut s.layers[layer].bias[i],
    }
}

/// Compares every parameter's backpropagated gradient with
/// `(L(θ + h) - L(θ - h)) / 2h`. Dropout uses one fixed mask throughout.
pub fn gradient_check(
    spec: &NetworkSpec,
    params: &ParamStore<f64>,
    input: &[f64],
    labels: &[usize],
    dropout: SeedStream,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let net = Network::new(spec)?;
    let mut input = input.to_vec();
    nudge_off_zero(&mut input);
    let mode = Mode::Train(dropout);
    let fwd = net.forward(params, &input, mode)?;
    let base = net.regions(&fwd);
    let (_, grads) = net.backward(params, &fwd, labels)?;
    drop(fwd);

    let mut slots = Vec::new();
    for (layer, p) in params.layers.iter().enumerate() {
        slots.extend((0..p.weights.len()).map(|i| (layer, ParamKind::Weight, i)));
        slots.extend((0..p.bias.len()).map(|i| (layer, ParamKind::Bias, i)));
    }
    let probes: Vec<(f64, bool)> = slots
        .par_chunks(64)
        .map(|chunk| -> Result<Vec<(f64, bool)>> {
            let mut local = params.clone();
            chunk
                .iter()
                .map(|&(layer, kind, i)| {
                    let orig = *slot(&mut local, layer, kind, i);
                    let mut probe = |fixed: Option<&Regions>| -> Result<(f64, bool)> {
                        *slot(&mut local, layer, kind, i) = orig + STEP;
                        let (plus, rp) = net.loss_in(&local, &input, labels, mode, fixed)?;
                        *slot(&mut local, layer, kind, i) = orig - STEP;
                        let (minus, rm) = net.loss_in(&local, &input, labels, mode, fixed)?;
                        *slot(&mut local, layer, kind, i) = orig;
                        Ok(((plus - minus) / (2.0 * STEP), rp != base || rm != base))
                    };
                    match probe(None)? {
                        (_, true) => Ok((probe(Some(&base))?.0, true)),
                        plain => Ok(plain),
                    }
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut report = GradCheckReport { checked: slots.len(), max_relative_error: 0.0, kink_crossings: 0, failures: Vec::new() };
    for (&(layer, kind, index), &(numeric, crossed)) in slots.iter().zip(&probes) {
        let analytic = match kind {
            ParamKind::Weight => grads[layer].weights[index],
            ParamKind::Bias => grads[layer].bias[index],
        };
        let rel = relative_error(analytic, numeric);
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at layer {layer} {kind:?} {index}")));
        }
        report.max_relative_error = report.max_relative_error.max(rel);
        report.kink_crossings += crossed as usize;
        if rel > tolerance {
            report.failures.push(GradMismatch { layer, kind, index, analytic, numeric, relative_error: rel });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Init;
    use crate::nn::spec::{InputShape, LayerSpec};

    #[test]
    fn affine_network_is_exact() {
        let spec = NetworkSpec {
            input: InputShape { height: 2, width: 2, channels: 3 },
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxXent],
        };
        let params = ParamStore::<f64>::init(&spec, Init::He, 9).unwrap();
        let input: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64 / 110.0 - 0.05).collect();
        let report = gradient_check(&spec, &params, &input, &[1], SeedStream::new(0), 1e-8).unwrap();
        assert_eq!(report.checked, 12 * 2 + 2);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn nudging_moves_only_near_zero_values() {
        let mut v = [0.0, -1e-5, 3e-3, 0.5, -0.2];
        nudge_off_zero(&mut v);
        assert_eq!(v, [INPUT_NUDGE, -INPUT_NUDGE, INPUT_NUDGE, 0.5, -0.2]);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        assert!(relative_error(1.0, 1.0 + 1e-6) < 1e-5);
        assert!(relative_error(1.0, 1.1) > 0.05);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 2e-12) < 1e-3);
    }
}
