//! Balanced, stratified and hold-one-subject-out pool selection.
//!
//! Every function works on indices into a caller-owned pool and is
//! deterministic for a given seed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::annotation::RecordKey;
use crate::cascade::EngagementLabel;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

const CLASSES: [EngagementLabel; 2] = [EngagementLabel::NotInterested, EngagementLabel::Interested];

fn class_indices(labels: &[EngagementLabel], class: EngagementLabel) -> Vec<usize> {
    labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect()
}

/// Picks `counts[c]` items of each class without replacement, then shuffles.
fn draw_per_class(labels: &[EngagementLabel], counts: [usize; 2], seed: u64) -> Result<Vec<usize>> {
    let stream = SeedStream::new(seed);
    let mut out = Vec::with_capacity(counts[0] + counts[1]);
    for (class, &want) in CLASSES.iter().zip(&counts) {
        let mut idx = class_indices(labels, *class);
        if idx.len() < want {
            return Err(Error::InsufficientClass { class: *class, requested: want, available: idx.len() });
        }
        let mut rng = stream.named(class.as_str()).rng();
        let (picked, _) = idx.partial_shuffle(&mut rng, want);
        out.extend_from_slice(picked);
    }
    out.shuffle(&mut stream.named("order").rng());
    Ok(out)
}

/// Exactly `per_class` items of each label.
pub fn balanced_sample(labels: &[EngagementLabel], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    draw_per_class(labels, [per_class, per_class], seed)
}

/// Class counts proportional to the pool, rounded by largest remainder.
pub fn stratified_counts(labels: &[EngagementLabel], total: usize) -> Result<[usize; 2]> {
    if total > labels.len() {
        return Err(Error::InsufficientPool { requested: total, available: labels.len() });
    }
    let n = labels.len() as u128;
    let mut counts = [0usize; 2];
    let mut remainders = [0u128; 2];
    for (c, class) in CLASSES.iter().enumerate() {
        let pop = labels.iter().filter(|&&l| l == *class).count() as u128;
        let exact = pop * total as u128;
        counts[c] = (exact / n.max(1)) as usize;
        remainders[c] = exact % n.max(1);
    }
    let mut order = [0usize, 1];
    // stable: ties go to the lower class index
    order.sort_by(|a, b| remainders[*b].cmp(&remainders[*a]));
    let mut missing = total - counts.iter().sum::<usize>();
    for c in order {
        if missing == 0 {
            break;
        }
        counts[c] += 1;
        missing -= 1;
    }
    Ok(counts)
}

pub fn stratified_sample(labels: &[EngagementLabel], total: usize, seed: u64) -> Result<Vec<usize>> {
    let counts = stratified_counts(labels, total)?;
    draw_per_class(labels, counts, seed)
}

/// Pools for one hold-one-subject-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldOut {
    pub subject_id: String,
    /// Every in-lecture item not belonging to the held subject.
    pub train: Vec<usize>,
    /// Balanced sample of the held subject, `min(pos, neg)` per class.
    pub test: Vec<usize>,
    /// All in-lecture items of the held subject.
    pub validation: Vec<usize>,
    /// Set when the held subject lacks one class, leaving `test` empty.
    pub test_empty: bool,
}

pub fn hold_one_subject_out(
    keys: &[RecordKey],
    labels: &[EngagementLabel],
    subject_id: &str,
    lecture_id: u32,
    seed: u64,
) -> Result<HoldOut> {
    assert_eq!(keys.len(), labels.len());
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        if key.lecture_id != lecture_id {
            continue;
        }
        if key.subject_id == subject_id {
            validation.push(i);
        } else {
            train.push(i);
        }
    }
    if validation.is_empty() {
        return Err(Error::UnknownSubject(subject_id.to_string()));
    }
    let held: Vec<EngagementLabel> = validation.iter().map(|&i| labels[i]).collect();
    let per_class = CLASSES.iter().map(|c| held.iter().filter(|&&l| l == *c).count()).min().unwrap_or(0);
    let test = balanced_sample(&held, per_class, seed)?.into_iter().map(|j| validation[j]).collect();
    Ok(HoldOut { subject_id: subject_id.to_string(), train, test, validation, test_empty: per_class == 0 })
}

pub fn class_histogram(labels: &[EngagementLabel], indices: &[usize]) -> [usize; 2] {
    let mut h = [0usize; 2];
    for &i in indices {
        h[labels[i].index()] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn pool(neg: usize, pos: usize) -> Vec<EngagementLabel> {
        let mut v = vec![EngagementLabel::NotInterested; neg];
        v.extend(vec![EngagementLabel::Interested; pos]);
        v
    }

    #[test]
    fn balanced_sizes() {
        let labels = pool(40, 70);
        let s = balanced_sample(&labels, 30, 1).unwrap();
        assert_eq!(s.len(), 60);
        assert_eq!(class_histogram(&labels, &s), [30, 30]);
        assert!(balanced_sample(&labels, 0, 1).unwrap().is_empty());
        assert_eq!(s, balanced_sample(&labels, 30, 1).unwrap());
        assert_ne!(s, balanced_sample(&labels, 30, 2).unwrap());
    }

    #[test]
    fn balanced_reports_the_short_class() {
        match balanced_sample(&pool(5, 70), 30, 1) {
            Err(Error::InsufficientClass { class, available, .. }) => {
                assert_eq!(class, EngagementLabel::NotInterested);
                assert_eq!(available, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stratified_examples() {
        assert_eq!(stratified_counts(&pool(50, 50), 100).unwrap(), [50, 50]);
        let labels = pool(89_765, 110_235);
        assert_eq!(stratified_counts(&labels, 200_000).unwrap(), [89_765, 110_235]);
        let all = stratified_sample(&pool(3, 4), 7, 9).unwrap();
        let set: HashSet<usize> = all.into_iter().collect();
        assert_eq!(set.len(), 7);
        assert!(matches!(stratified_sample(&pool(3, 4), 8, 9), Err(Error::InsufficientPool { .. })));
    }

    #[test]
    fn hold_out_pools() {
        let mut keys = Vec::new();
        let mut labels = Vec::new();
        for s in 0..3 {
            for f in 0..10u64 {
                keys.push(RecordKey { lecture_id: 1, subject_id: format!("s{s}"), frame_index: f });
                labels.push(if f < 3 { EngagementLabel::NotInterested } else { EngagementLabel::Interested });
            }
        }
        keys.push(RecordKey { lecture_id: 2, subject_id: "s0".into(), frame_index: 0 });
        labels.push(EngagementLabel::Interested);
        let h = hold_one_subject_out(&keys, &labels, "s1", 1, 3).unwrap();
        assert_eq!(h.validation.len(), 10);
        assert_eq!(h.train.len(), 20);
        assert_eq!(h.test.len(), 2 * 3);
        assert!(!h.train.contains(&30));
        assert!(h.train.iter().all(|&i| keys[i].subject_id != "s1"));
        assert!(h.test.iter().all(|i| h.validation.contains(i)));
        assert!(matches!(hold_one_subject_out(&keys, &labels, "zz", 1, 3), Err(Error::UnknownSubject(_))));
    }

    #[test]
    fn one_class_subject_flags_empty_test() {
        let keys: Vec<RecordKey> =
            (0..4).map(|f| RecordKey { lecture_id: 1, subject_id: "a".into(), frame_index: f }).collect();
        let labels = vec![EngagementLabel::Interested; 4];
        let h = hold_one_subject_out(&keys, &labels, "a", 1, 0).unwrap();
        assert!(h.test_empty && h.test.is_empty());
    }

    proptest! {
        #[test]
        fn balanced_is_uniform(neg in 0usize..60, pos in 0usize..60, seed: u64) {
            let labels = pool(neg, pos);
            let per = neg.min(pos);
            let s = balanced_sample(&labels, per, seed).unwrap();
            prop_assert_eq!(class_histogram(&labels, &s), [per, per]);
            let set: HashSet<usize> = s.iter().copied().collect();
            prop_assert_eq!(set.len(), s.len());
        }

        #[test]
        fn stratified_is_near_proportional(neg in 0usize..500, pos in 0usize..500, frac in 0.0f64..=1.0, seed: u64) {
            let labels = pool(neg, pos);
            let n = labels.len();
            let total = (n as f64 * frac).floor() as usize;
            let s = stratified_sample(&labels, total, seed).unwrap();
            prop_assert_eq!(s.len(), total);
            let h = class_histogram(&labels, &s);
            if n > 0 {
                for (c, pop) in [neg, pos].iter().enumerate() {
                    let exact = *pop as f64 * total as f64 / n as f64;
                    prop_assert!((h[c] as f64 - exact).abs() < 1.0);
                }
            }
        }
    }
}
