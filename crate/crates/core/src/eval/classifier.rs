//! One interface over the CNN and the HOG-SVM baseline.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::baseline::{BaselineConfig, BaselineModel};
use crate::dataset::ImageCube;
use crate::error::{Error, Result};
use crate::nn::train::{channel_mean, predict, train, ShuffledPool, TrainConfig};
use crate::nn::{Checkpoint, Init, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Cnn,
    Svm,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ClassifierKind::Cnn),
            "svm" => Ok(ClassifierKind::Svm),
            _ => Err(Error::UnknownEnum { kind: "classifier", value: s.to_string() }),
        }
    }
}

/// Everything needed to fit either classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Network preset, `tiny` or `alexnet`, sized to the cubes at fit time.
    pub network: String,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { network: "alexnet".into(), train: TrainConfig::default(), baseline: BaselineConfig::default() }
    }
}

impl ClassifierConfig {
    /// `alexnet` keeps the training defaults; `tiny` swaps in He init and a
    /// short schedule, since small Gaussian weights leave it stuck at chance.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "alexnet" => Ok(ClassifierConfig::default()),
            "tiny" => Ok(ClassifierConfig {
                network: "tiny".into(),
                train: TrainConfig { batch_size: 64, iterations: 500, init: Init::He, ..TrainConfig::default() },
                baseline: BaselineConfig::default(),
            }),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected alexnet or tiny)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Cnn(Checkpoint),
    Svm(BaselineModel),
}

/// Fits `kind` on cubes with labels `true` for Interested; `seed` replaces
/// the training seed of the config.
pub fn fit(kind: ClassifierKind, config: &ClassifierConfig, cubes: &[ImageCube], labels: &[bool], seed: u64) -> Result<Trained> {
    if cubes.len() != labels.len() {
        return Err(Error::Shape(format!("{} cubes for {} labels", cubes.len(), labels.len())));
    }
    let first = cubes.first().ok_or(Error::InsufficientPool { requested: 1, available: 0 })?;
    match kind {
        ClassifierKind::Cnn => {
            let spec = NetworkSpec::preset(&config.network, first.height, first.width, first.frames())?;
            let mean = channel_mean(cubes)?;
            let idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
            let cfg = TrainConfig { seed, ..config.train.clone() };
            let mut pool = ShuffledPool::from_cubes(cubes, &idx, &mean, seed)?;
            let out = train(&spec, &cfg, &mut pool)?;
            Ok(Trained::Cnn(Checkpoint { spec, params: out.params, input_mean: mean, iteration: cfg.iterations }))
        }
        ClassifierKind::Svm => {
            if first.frames() != 1 {
                return Err(Error::Shape(format!(
                    "the svm classifier takes single-frame cubes, got {} frames",
                    first.frames()
                )));
            }
            Ok(Trained::Svm(BaselineModel::fit(cubes, labels, &config.baseline)?))
        }
    }
}

impl Trained {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Trained::Cnn(_) => ClassifierKind::Cnn,
            Trained::Svm(_) => ClassifierKind::Svm,
        }
    }

    /// Frames per cube the model expects.
    pub fn frames(&self) -> usize {
        match self {
            Trained::Cnn(m) => m.spec.input.channels / 3,
            Trained::Svm(_) => 1,
        }
    }

    /// Crop `(width, height)` the model expects.
    pub fn input_size(&self) -> (u32, u32) {
        match self {
            Trained::Cnn(m) => (m.spec.input.width as u32, m.spec.input.height as u32),
            Trained::Svm(m) => (m.width as u32, m.height as u32),
        }
    }

    /// Probability (CNN) or SVM margin of Interested, one per cube.
    pub fn scores(&self, cubes: &[ImageCube]) -> Result<Vec<f64>> {
        match self {
            Trained::Cnn(m) => Ok(predict(m, cubes)?.iter().map(|p| p[1] as f64).collect()),
            Trained::Svm(m) => Ok(m.predict(cubes)?.iter().map(|p| p.1).collect()),
        }
    }

    pub fn predict(&self, cubes: &[ImageCube]) -> Result<Vec<bool>> {
        match self {
            Trained::Cnn(m) => Ok(predict(m, cubes)?.iter().map(|p| p[1] > p[0]).collect()),
            Trained::Svm(m) => Ok(m.predict(cubes)?.iter().map(|p| p.0).collect()),
        }
    }

    /// Probability of ¬Interested; SVM margins go through a unit logistic.
    pub fn disengagement(&self, cubes: &[ImageCube]) -> Result<Vec<f64>> {
        match self {
            Trained::Cnn(m) => Ok(predict(m, cubes)?.iter().map(|p| p[0] as f64).collect()),
            Trained::Svm(m) => Ok(m.predict(cubes)?.iter().map(|p| 1.0 / (1.0 + p.1.exp())).collect()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Trained::Cnn(m) => m.save(path),
            Trained::Svm(m) => m.save(path),
        }
    }

    /// Dispatches on the file's magic bytes.
    pub fn load(path: &Path) -> Result<Trained> {
        let bytes = crate::framing::read_file(path)?;
        match bytes.get(..4) {
            Some(m) if m == crate::nn::checkpoint::MAGIC => Ok(Trained::Cnn(Checkpoint::from_bytes(&bytes)?)),
            Some(m) if m == crate::baseline::MAGIC => Ok(Trained::Svm(BaselineModel::from_bytes(&bytes)?)),
            _ => Err(Error::Format(format!("{} is neither a WNET nor a WSVM file", path.display()))),
        }
    }
}
