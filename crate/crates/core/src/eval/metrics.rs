use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

use crate::cascade::EngagementLabel;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Rows are the actual class, columns the predicted one, ¬Interested first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn new(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        ConfusionMatrix { tn, fp, fn_, tp }
    }

    /// `true` stands for Interested.
    pub fn from_predictions(actual: &[bool], predicted: &[bool]) -> Self {
        assert_eq!(actual.len(), predicted.len());
        let mut cm = ConfusionMatrix::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            match (a, p) {
                (false, false) => cm.tn += 1,
                (false, true) => cm.fp += 1,
                (true, false) => cm.fn_ += 1,
                (true, true) => cm.tp += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::InvalidRecord("accuracy of an empty confusion matrix".into())),
            n => Ok((self.tn + self.tp) as f64 / n as f64),
        }
    }

    /// Row sums: `[actual ¬Interested, actual Interested]`.
    pub fn actual_counts(&self) -> [u64; 2] {
        [self.tn + self.fp, self.fn_ + self.tp]
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionMatrix::new(self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_, self.tp + o.tp)
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Mean of the two middle values for even counts.
    pub median: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InvalidRecord("summary of an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("summary of a list containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    Ok(Summary { min: sorted[0], max: sorted[n - 1], mean: sorted.iter().sum::<f64>() / n as f64, median })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `0..labels.len()` into `k` disjoint test folds whose sizes differ
/// by at most one. With `stratified`, items are dealt class by class so
/// every fold's class counts also differ by at most one.
pub fn kfold(labels: &[EngagementLabel], k: usize, stratified: bool, seed: u64) -> Result<Vec<Fold>> {
    use rand::seq::SliceRandom;
    let n = labels.len();
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::InsufficientPool { requested: k, available: n });
    }
    let stream = SeedStream::new(seed).named("kfold");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.index(0).rng());
    if stratified {
        // Stable partition by class keeps the shuffled order within each class.
        order.sort_by_key(|&i| labels[i].index());
    }
    let mut tests = vec![Vec::new(); k];
    for (slot, &i) in order.iter().enumerate() {
        tests[slot % k].push(i);
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            Fold { train: (0..n).filter(|&i| !in_test[i]).collect(), test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EngagementLabel::*;

    #[test]
    fn accuracy_values() {
        assert_eq!(ConfusionMatrix::new(1, 0, 0, 1).accuracy().unwrap(), 1.0);
        assert!(ConfusionMatrix::default().accuracy().is_err());
        let cm = ConfusionMatrix::from_predictions(&[true, true, false, false], &[true, false, true, false]);
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 1, 1));
        let json = serde_json::to_string(&cm).unwrap();
        assert_eq!(json, r#"{"tn":1,"fp":1,"fn":1,"tp":1}"#);
    }

    #[test]
    fn summaries() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.median), (1.0, 3.0, 2.0, 2.0));
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        let c = summarize(&[0.7; 5]).unwrap();
        assert!(c.min == 0.7 && c.max == 0.7 && (c.mean - 0.7).abs() < 1e-15 && c.median == 0.7);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn ten_items_five_folds() {
        let labels = vec![Interested; 10];
        let folds = kfold(&labels, 5, false, 1).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        assert!(kfold(&labels, 1, false, 1).is_err());
        assert!(kfold(&labels[..3], 4, false, 1).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_pool(n in 2usize..80, k in 2usize..8, pos in 0usize..80, seed in any::<u64>(), strat in any::<bool>()) {
            prop_assume!(n >= k);
            let labels: Vec<_> = (0..n).map(|i| if i < pos.min(n) { Interested } else { NotInterested }).collect();
            let folds = kfold(&labels, k, strat, seed).unwrap();
            let mut seen = vec![0; n];
            for f in &folds {
                for &i in &f.test { seen[i] += 1; }
                prop_assert_eq!(f.train.len() + f.test.len(), n);
                prop_assert!(f.train.iter().all(|i| !f.test.contains(i)));
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            if strat {
                let total_pos = labels.iter().filter(|l| **l == Interested).count() as f64;
                for f in &folds {
                    let p = f.test.iter().filter(|&&i| labels[i] == Interested).count() as f64;
                    let expected = total_pos * f.test.len() as f64 / n as f64;
                    prop_assert!((p - expected).abs() <= 1.0, "fold positives {} expected {}", p, expected);
                }
            }
        }
    }
}
