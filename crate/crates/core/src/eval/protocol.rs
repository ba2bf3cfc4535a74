//! The four experimental protocols: random split, cross-subject hold-out,
//! sequence length and image size.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::classifier::{fit, ClassifierConfig, ClassifierKind, Trained};
use super::metrics::{kfold, summarize, ConfusionMatrix, Summary};
use crate::cascade::EngagementLabel;
use crate::dataset::{
    balanced_sample, hold_one_subject_out, sample_cube, stratified_sample, tiled_samples, AnnotationRecord, CropStore,
    ImageCube, RecordKey, Sample,
};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    RandomSplit,
    CrossSubject,
    SequenceLength,
    ImageSize,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::RandomSplit, Protocol::CrossSubject, Protocol::SequenceLength, Protocol::ImageSize];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::RandomSplit => "random_split",
            Protocol::CrossSubject => "cross_subject",
            Protocol::SequenceLength => "sequence_length",
            Protocol::ImageSize => "image_size",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownEnum { kind: "protocol", value: s.to_string() })
    }
}

/// Requested sizes of the random-split pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Stratified, drawn from what train and test left over.
    pub validation_total: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { train_per_class: 30_000, test_per_class: 10_000, validation_total: 200_000 }
    }
}

impl SplitSizes {
    /// Shrinks all three sizes by one common factor until they fit a pool
    /// with the given class counts; unchanged when they already fit.
    pub fn fitted_to(&self, counts: [usize; 2]) -> SplitSizes {
        let n = (counts[0] + counts[1]) as f64;
        let per_class = (self.train_per_class + self.test_per_class) as f64;
        let total = 2.0 * per_class + self.validation_total as f64;
        let mut f: f64 = 1.0;
        if per_class > 0.0 {
            f = f.min(counts[0].min(counts[1]) as f64 / per_class);
        }
        if total > 0.0 {
            f = f.min(n / total);
        }
        if f >= 1.0 {
            return *self;
        }
        let scale = |v: usize| (v as f64 * f).floor() as usize;
        SplitSizes {
            train_per_class: scale(self.train_per_class),
            test_per_class: scale(self.test_per_class),
            validation_total: scale(self.validation_total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Root of every sampling and training seed.
    pub seed: u64,
    pub classifier: ClassifierConfig,
    pub split: SplitSizes,
    /// Shrink requested sizes to the available data instead of failing.
    pub fit_to_data: bool,
    /// Folds of cross-validation over the random-split training set (SVM only, 0 disables).
    pub cross_validation_folds: usize,
    /// Training images per class for each cross-subject run.
    pub holdout_train_per_class: usize,
    /// Lecture whose subjects the cross-subject protocol holds out.
    pub lecture: u32,
    pub frames: Vec<usize>,
    pub image_sizes: Vec<u32>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            seed: 0,
            classifier: ClassifierConfig::default(),
            split: SplitSizes::default(),
            fit_to_data: true,
            cross_validation_folds: 5,
            holdout_train_per_class: 30_000,
            lecture: 1,
            frames: vec![1, 2, 4],
            image_sizes: vec![64, 96, 128],
        }
    }
}

/// One trained model evaluated on a test and a validation pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub image_size: [u32; 2],
    pub channels: usize,
    pub sizes: SplitSizes,
    pub train_size: usize,
    pub test: ConfusionMatrix,
    pub validation: ConfusionMatrix,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub cross_validation_accuracy: Option<f64>,
    /// No record occurs in more than one of the train, test and validation pools.
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub train_size: usize,
    pub test: ConfusionMatrix,
    /// `None` when the subject lacks one class.
    pub test_accuracy: Option<f64>,
    pub validation: ConfusionMatrix,
    pub validation_accuracy: f64,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEcho {
    pub records: usize,
    pub subjects: usize,
    pub interested: usize,
    pub not_interested: usize,
    pub crop_size: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub classifier: ClassifierKind,
    pub config: ProtocolConfig,
    pub dataset: DatasetEcho,
    pub runs: Vec<RunReport>,
    pub subjects: Vec<SubjectReport>,
    /// Over run test accuracies, or subject test accuracies where defined.
    pub test_summary: Option<Summary>,
    /// Sum of the subjects' validation matrices.
    pub pooled_validation: Option<ConfusionMatrix>,
    pub pooled_validation_accuracy: Option<f64>,
}

impl ProtocolReport {
    /// Recomputes every derived figure from the stored counts.
    pub fn verify(&self) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let bad = |what: &str| Err(Error::InvalidRecord(format!("report {what} does not recompute")));
        for r in &self.runs {
            if !close(r.test.accuracy()?, r.test_accuracy) || !close(r.validation.accuracy()?, r.validation_accuracy) {
                return bad("run accuracy");
            }
        }
        let mut pooled = ConfusionMatrix::default();
        for s in &self.subjects {
            if s.test_accuracy.map(|a| s.test.accuracy().map(|b| close(a, b))).transpose()? == Some(false)
                || !close(s.validation.accuracy()?, s.validation_accuracy)
            {
                return bad("subject accuracy");
            }
            pooled += s.validation;
        }
        if !self.subjects.is_empty()
            && (self.pooled_validation != Some(pooled) || self.pooled_validation_accuracy != Some(pooled.accuracy()?))
        {
            return bad("pooled validation");
        }
        if self.test_summary != summary_of(&self.test_values())? {
            return bad("summary");
        }
        Ok(())
    }

    /// Fills in the pooled and summary figures.
    pub fn assemble(
        protocol: Protocol,
        classifier: ClassifierKind,
        config: &ProtocolConfig,
        data: &Dataset,
        runs: Vec<RunReport>,
        subjects: Vec<SubjectReport>,
    ) -> Result<ProtocolReport> {
        let (pooled_validation, pooled_validation_accuracy) = if subjects.is_empty() {
            (None, None)
        } else {
            let pooled = subjects.iter().fold(ConfusionMatrix::default(), |acc, s| acc + s.validation);
            (Some(pooled), Some(pooled.accuracy()?))
        };
        let mut report = ProtocolReport {
            protocol,
            classifier,
            config: config.clone(),
            dataset: data.echo(),
            runs,
            subjects,
            test_summary: None,
            pooled_validation,
            pooled_validation_accuracy,
        };
        report.test_summary = summary_of(&report.test_values())?;
        Ok(report)
    }

    fn test_values(&self) -> Vec<f64> {
        if self.subjects.is_empty() {
            self.runs.iter().map(|r| r.test_accuracy).collect()
        } else {
            self.subjects.iter().filter_map(|s| s.test_accuracy).collect()
        }
    }
}

fn summary_of(values: &[f64]) -> Result<Option<Summary>> {
    if values.is_empty() {
        Ok(None)
    } else {
        summarize(values).map(Some)
    }
}

/// Annotations with their crops.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<AnnotationRecord>,
    pub crops: CropStore,
}

impl Dataset {
    fn echo(&self) -> DatasetEcho {
        let interested = self.records.iter().filter(|r| r.label() == EngagementLabel::Interested).count();
        let subjects: BTreeSet<(u32, &str)> = self.records.iter().map(|r| (r.lecture_id, r.subject_id.as_str())).collect();
        let (w, h) = self.crops.size();
        DatasetEcho {
            records: self.records.len(),
            subjects: subjects.len(),
            interested,
            not_interested: self.records.len() - interested,
            crop_size: [w, h],
        }
    }
}

struct Pools<'a> {
    records: &'a [AnnotationRecord],
    crops: &'a CropStore,
    samples: Vec<Sample>,
}

impl Pools<'_> {
    fn labels(&self) -> Vec<EngagementLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    fn cubes(&self, idx: &[usize]) -> Result<Vec<ImageCube>> {
        use rayon::prelude::*;
        idx.par_iter().map(|&i| sample_cube(&self.samples[i], self.records, self.crops)).collect()
    }

    fn truth(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.samples[i].label == EngagementLabel::Interested).collect()
    }

    fn keys(&self, idx: &[usize]) -> BTreeSet<RecordKey> {
        idx.iter().flat_map(|&i| self.samples[i].frames.iter().map(|&r| self.records[r].key())).collect()
    }

    fn evaluate(&self, model: &Trained, idx: &[usize]) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::default();
        for chunk in idx.chunks(512) {
            cm += ConfusionMatrix::from_predictions(&self.truth(chunk), &model.predict(&self.cubes(chunk)?)?);
        }
        Ok(cm)
    }
}

fn pairwise_disjoint(sets: &[&BTreeSet<RecordKey>]) -> bool {
    sets.iter().enumerate().all(|(i, a)| sets[i + 1..].iter().all(|b| a.is_disjoint(b)))
}

fn subset(labels: &[EngagementLabel], idx: &[usize]) -> Vec<EngagementLabel> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn counts(labels: &[EngagementLabel]) -> [usize; 2] {
    let pos = labels.iter().filter(|&&l| l == EngagementLabel::Interested).count();
    [labels.len() - pos, pos]
}

/// One random-split run over `k`-frame cubes that also hands back the model.
pub fn train_and_evaluate(kind: ClassifierKind, data: &Dataset, frames: usize, config: &ProtocolConfig) -> Result<(Trained, RunReport)> {
    let stream = SeedStream::new(config.seed).named("train");
    random_split(kind, &data.records, &data.crops, frames, config, stream)
}

fn random_split(
    kind: ClassifierKind,
    records: &[AnnotationRecord],
    crops: &CropStore,
    frames: usize,
    config: &ProtocolConfig,
    stream: SeedStream,
) -> Result<(Trained, RunReport)> {
    let pools = Pools { records, crops, samples: tiled_samples(records, frames) };
    let labels = pools.labels();
    let sizes = if config.fit_to_data { config.split.fitted_to(counts(&labels)) } else { config.split };
    if sizes.train_per_class == 0 || sizes.test_per_class == 0 || sizes.validation_total == 0 {
        return Err(Error::InsufficientPool { requested: 2 * (config.split.train_per_class + config.split.test_per_class), available: labels.len() });
    }

    let train = balanced_sample(&labels, sizes.train_per_class, stream.named("train").value())?;
    let rest = complement(labels.len(), &train);
    let test: Vec<usize> = balanced_sample(&subset(&labels, &rest), sizes.test_per_class, stream.named("test").value())?
        .into_iter()
        .map(|i| rest[i])
        .collect();
    let rest = complement_of(&rest, &test);
    let validation: Vec<usize> = stratified_sample(&subset(&labels, &rest), sizes.validation_total, stream.named("validation").value())?
        .into_iter()
        .map(|i| rest[i])
        .collect();
    let disjoint = pairwise_disjoint(&[&pools.keys(&train), &pools.keys(&test), &pools.keys(&validation)]);
    if !disjoint {
        return Err(Error::InvalidRecord("random split pools overlap".into()));
    }

    let train_cubes = pools.cubes(&train)?;
    let train_truth = pools.truth(&train);
    let cross_validation_accuracy = if kind == ClassifierKind::Svm && config.cross_validation_folds >= 2 {
        let folds = kfold(&subset(&labels, &train), config.cross_validation_folds, true, stream.named("folds").value())?;
        let mut cm = ConfusionMatrix::default();
        for (f, fold) in folds.iter().enumerate() {
            let pick = |ix: &[usize]| (ix.iter().map(|&i| train_cubes[i].clone()).collect::<Vec<_>>(), ix.iter().map(|&i| train_truth[i]).collect::<Vec<_>>());
            let (tc, tl) = pick(&fold.train);
            let (ec, el) = pick(&fold.test);
            let model = fit(kind, &config.classifier, &tc, &tl, stream.named("fold").index(f as u64).value())?;
            cm += ConfusionMatrix::from_predictions(&el, &model.predict(&ec)?);
        }
        Some(cm.accuracy()?)
    } else {
        None
    };
    let model = fit(kind, &config.classifier, &train_cubes, &train_truth, stream.named("model").value())?;
    drop(train_cubes);
    let test_cm = pools.evaluate(&model, &test)?;
    let validation_cm = pools.evaluate(&model, &validation)?;
    let (w, h) = crops.size();
    let report = RunReport {
        frames,
        image_size: [w, h],
        channels: 3 * frames,
        sizes,
        train_size: train.len(),
        test: test_cm,
        validation: validation_cm,
        test_accuracy: test_cm.accuracy()?,
        validation_accuracy: validation_cm.accuracy()?,
        cross_validation_accuracy,
        disjoint,
    };
    Ok((model, report))
}

fn complement(n: usize, taken: &[usize]) -> Vec<usize> {
    let mut used = vec![false; n];
    taken.iter().for_each(|&i| used[i] = true);
    (0..n).filter(|&i| !used[i]).collect()
}

fn complement_of(pool: &[usize], taken: &[usize]) -> Vec<usize> {
    let taken: BTreeSet<usize> = taken.iter().copied().collect();
    pool.iter().copied().filter(|i| !taken.contains(i)).collect()
}

fn cross_subject(kind: ClassifierKind, data: &Dataset, config: &ProtocolConfig, stream: SeedStream) -> Result<Vec<SubjectReport>> {
    let pools = Pools { records: &data.records, crops: &data.crops, samples: tiled_samples(&data.records, 1) };
    let labels = pools.labels();
    let keys: Vec<RecordKey> = pools.samples.iter().map(|s| data.records[s.anchor()].key()).collect();
    let subjects: BTreeSet<&str> =
        keys.iter().filter(|k| k.lecture_id == config.lecture).map(|k| k.subject_id.as_str()).collect();
    if subjects.len() < 2 {
        return Err(Error::InsufficientPool { requested: 2, available: subjects.len() });
    }
    let mut reports = Vec::with_capacity(subjects.len());
    for subject in subjects {
        let s = stream.named(subject);
        let ho = hold_one_subject_out(&keys, &labels, subject, config.lecture, s.named("holdout").value())?;
        let train_labels = subset(&labels, &ho.train);
        let available = counts(&train_labels);
        let per_class = if config.fit_to_data {
            config.holdout_train_per_class.min(available[0]).min(available[1])
        } else {
            config.holdout_train_per_class
        };
        let train: Vec<usize> =
            balanced_sample(&train_labels, per_class, s.named("train").value())?.into_iter().map(|i| ho.train[i]).collect();
        let train_keys = pools.keys(&train);
        let disjoint = pairwise_disjoint(&[&train_keys, &pools.keys(&ho.validation)])
            && pairwise_disjoint(&[&train_keys, &pools.keys(&ho.test)]);
        if !disjoint {
            return Err(Error::InvalidRecord(format!("hold-out of {subject} leaks into training")));
        }
        let model = fit(kind, &config.classifier, &pools.cubes(&train)?, &pools.truth(&train), s.named("model").value())?;
        let test = pools.evaluate(&model, &ho.test)?;
        let validation = pools.evaluate(&model, &ho.validation)?;
        reports.push(SubjectReport {
            subject_id: subject.to_string(),
            train_size: train.len(),
            test,
            test_accuracy: if ho.test_empty { None } else { Some(test.accuracy()?) },
            validation,
            validation_accuracy: validation.accuracy()?,
            disjoint,
        });
    }
    Ok(reports)
}

/// Runs `protocol` end to end and assembles its report.
pub fn run_protocol(protocol: Protocol, kind: ClassifierKind, data: &Dataset, config: &ProtocolConfig) -> Result<ProtocolReport> {
    let stream = SeedStream::new(config.seed).named(protocol.as_str());
    let mut runs = Vec::new();
    let mut subjects = Vec::new();
    match protocol {
        Protocol::RandomSplit => runs.push(random_split(kind, &data.records, &data.crops, 1, config, stream)?.1),
        Protocol::SequenceLength => {
            if kind == ClassifierKind::Svm && config.frames.iter().any(|&k| k != 1) {
                return Err(Error::Shape("the svm classifier cannot take multi-frame cubes".into()));
            }
            for &k in &config.frames {
                if k == 0 {
                    return Err(Error::Config("sequence length must be at least 1".into()));
                }
                runs.push(random_split(kind, &data.records, &data.crops, k, config, stream.index(k as u64))?.1);
            }
        }
        Protocol::ImageSize => {
            for &size in &config.image_sizes {
                let resized;
                let crops = if data.crops.size() == (size, size) {
                    &data.crops
                } else {
                    resized = data.crops.resized(size, size);
                    &resized
                };
                runs.push(random_split(kind, &data.records, crops, 1, config, stream.index(size as u64))?.1);
            }
        }
        Protocol::CrossSubject => subjects = cross_subject(kind, data, config, stream)?,
    }
    ProtocolReport::assemble(protocol, kind, config, data, runs, subjects)
}
