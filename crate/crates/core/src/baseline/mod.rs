//! HOG → PCA → linear SVM comparison pipeline.

pub mod hog;
pub mod pca;
pub mod svm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub use hog::{hog, luma, HogConfig};
pub use pca::{pca_fit, PcaModel, PcaTarget};
pub use svm::{svm_train, SvmConfig, SvmFit, SvmModel};

use crate::dataset::ImageCube;
use crate::error::{Error, Result};
use crate::framing;

pub const MAGIC: &[u8; 4] = b"WSVM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub hog: HogConfig,
    pub pca: PcaTarget,
    pub svm: SvmConfig,
}

/// A fitted pipeline. Stored parameters are f32-representable so a saved
/// model predicts exactly like the one that was fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub hog: HogConfig,
    pub width: usize,
    pub height: usize,
    pub pca: PcaModel,
    pub svm: SvmModel,
    pub fit: SvmFit,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hog: HogConfig,
    width: usize,
    height: usize,
    dim: usize,
    explained: Vec<f64>,
    bias: f64,
    c: f64,
    fit: SvmFit,
}

/// HOG of each single-frame cube, in input order.
pub fn features(cubes: &[ImageCube], config: &HogConfig) -> Result<Vec<Vec<f32>>> {
    cubes
        .par_iter()
        .map(|cube| {
            if cube.channels != 3 {
                return Err(Error::Shape(format!(
                    "the HOG baseline takes single-frame cubes, got {} channels",
                    cube.channels
                )));
            }
            hog(&luma(&cube.data), cube.width, cube.height, config)
        })
        .collect()
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

impl BaselineModel {
    /// Labels are `true` for Interested.
    pub fn fit(cubes: &[ImageCube], labels: &[bool], config: &BaselineConfig) -> Result<BaselineModel> {
        let first = cubes.first().ok_or(Error::InsufficientPool { requested: 2, available: 0 })?;
        let (width, height) = (first.width, first.height);
        if cubes.iter().any(|c| (c.width, c.height) != (width, height)) {
            return Err(Error::Shape("cubes differ in size".into()));
        }
        let feats = features(cubes, &config.hog)?;
        let mut pca = pca_fit(&feats, config.pca)?;
        round_f32(&mut pca.mean);
        round_f32(&mut pca.components);
        let projected: Vec<Vec<f64>> = feats.par_iter().map(|f| pca.project(f)).collect::<Result<_>>()?;
        let (mut svm, fit) = svm_train(&projected, labels, &config.svm)?;
        round_f32(&mut svm.weights);
        Ok(BaselineModel { hog: config.hog, width, height, pca, svm, fit })
    }

    /// `(interested, margin)` per cube.
    pub fn predict(&self, cubes: &[ImageCube]) -> Result<Vec<(bool, f64)>> {
        if let Some(c) = cubes.iter().find(|c| (c.width, c.height) != (self.width, self.height)) {
            return Err(Error::Shape(format!("{}×{} cube for a {}×{} model", c.width, c.height, self.width, self.height)));
        }
        let feats = features(cubes, &self.hog)?;
        feats.par_iter().map(|f| Ok(self.svm.predict(&self.pca.project(f)?))).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            hog: self.hog,
            width: self.width,
            height: self.height,
            dim: self.pca.dim,
            explained: self.pca.explained.clone(),
            bias: self.svm.bias,
            c: self.svm.c,
            fit: self.fit,
        };
        let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let (mean, comps, w) = (f32s(&self.pca.mean), f32s(&self.pca.components), f32s(&self.svm.weights));
        framing::encode(MAGIC, VERSION, &header, &[&mean, &comps, &w])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BaselineModel> {
        let (h, values): (Header, Vec<f32>) = framing::decode(MAGIC, VERSION, bytes)?;
        let k = h.explained.len();
        let blocks = framing::split_blocks(&values, &[h.dim, k * h.dim, k])?;
        let f64s = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
        Ok(BaselineModel {
            hog: h.hog,
            width: h.width,
            height: h.height,
            pca: PcaModel { mean: f64s(&blocks[0]), components: f64s(&blocks[1]), dim: h.dim, explained: h.explained },
            svm: SvmModel { weights: f64s(&blocks[2]), bias: h.bias, c: h.c },
            fit: h.fit,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        framing::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<BaselineModel> {
        BaselineModel::from_bytes(&framing::read_file(path)?)
    }
}
