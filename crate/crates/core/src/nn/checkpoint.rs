//! `WNET` checkpoint files.
//!
//! Framing as in [`crate::framing`]; the JSON header carries the network
//! spec, the per-channel input mean and the iteration count. The body holds
//! weights then bias of every parameterised layer in spec order, followed by
//! the momentum buffers in the same order when `velocity` is set.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::network::{LayerParams, ParamStore};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::framing;

pub const MAGIC: &[u8; 4] = b"WNET";
pub const VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    input_mean: Vec<f32>,
    iteration: usize,
    velocity: bool,
}

/// A trained network together with its input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: ParamStore<f32>,
    /// Per-channel mean subtracted from [0, 1] inputs.
    pub input_mean: Vec<f32>,
    pub iteration: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self, with_velocity: bool) -> Result<Vec<u8>> {
        let header = Header {
            spec: self.spec.clone(),
            input_mean: self.input_mean.clone(),
            iteration: self.iteration,
            velocity: with_velocity,
        };
        let sets: &[&Vec<LayerParams<f32>>] =
            if with_velocity { &[&self.params.layers, &self.params.velocity] } else { &[&self.params.layers] };
        let blocks: Vec<&[f32]> =
            sets.iter().flat_map(|ls| ls.iter()).flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect();
        framing::encode(MAGIC, VERSION, &header, &blocks)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let (header, values): (Header, Vec<f32>) = framing::decode(MAGIC, VERSION, bytes)?;
        let sizes = header.spec.param_sizes()?;
        let mut block_sizes: Vec<usize> = sizes.iter().flat_map(|&(w, b)| [w, b]).collect();
        if header.velocity {
            block_sizes.extend(block_sizes.clone());
        }
        let mut blocks = framing::split_blocks(&values, &block_sizes)?.into_iter();
        let mut take = || -> Vec<LayerParams<f32>> {
            sizes
                .iter()
                .map(|_| LayerParams { weights: blocks.next().unwrap(), bias: blocks.next().unwrap() })
                .collect()
        };
        let layers = take();
        let velocity = if header.velocity {
            take()
        } else {
            layers.iter().map(|l| LayerParams { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] }).collect()
        };
        if header.input_mean.len() != header.spec.input.channels {
            return Err(Error::Format("input mean does not match the input channels".into()));
        }
        Ok(Checkpoint { spec: header.spec, params: ParamStore { layers, velocity }, input_mean: header.input_mean, iteration: header.iteration })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        framing::write_file(path, &self.to_bytes(true)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&framing::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Init;

    #[test]
    fn lossless_round_trip() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let mut params = ParamStore::<f32>::init(&spec, Init::He, 3).unwrap();
        params.velocity[0].weights[5] = -1.25e-7;
        let ck = Checkpoint { spec, params, input_mean: vec![0.1, 0.2, 0.3], iteration: 42 };
        let bytes = ck.to_bytes(true).unwrap();
        assert_eq!(&bytes[..4], b"WNET");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);

        let lean = Checkpoint::from_bytes(&ck.to_bytes(false).unwrap()).unwrap();
        assert_eq!(lean.params.layers, ck.params.layers);
        assert!(lean.params.velocity.iter().all(|l| l.weights.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn truncated_body_rejected() {
        let spec = NetworkSpec::tiny(32, 32, 1);
        let params = ParamStore::<f32>::zeros(&spec).unwrap();
        let ck = Checkpoint { spec, params, input_mean: vec![0.0; 3], iteration: 0 };
        let bytes = ck.to_bytes(false).unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }
}
