use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RngStream;
use crate::{Error, Result};

/// An out-of-bootstrap train/test index pair over a source of `source_size` items.
///
/// `train_indices` is a multiset (drawn with replacement, kept in draw order);
/// `test_indices` are distinct, sorted, and never appear in the training multiset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    source_size: usize,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
    requested_test_size: usize,
}

/// Audit form of a split: training multiplicities plus the test list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub source_size: usize,
    pub train_counts: BTreeMap<usize, usize>,
    pub test_indices: Vec<usize>,
}

impl SplitSpec {
    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_indices
    }

    /// True when the complement was smaller than the requested test size.
    pub fn truncated(&self) -> bool {
        self.test_indices.len() < self.requested_test_size
    }

    /// Number of distinct indices in the training multiset.
    pub fn unique_train(&self) -> usize {
        let mut seen = vec![false; self.source_size];
        self.train_indices.iter().filter(|&&i| !std::mem::replace(&mut seen[i], true)).count()
    }

    pub fn to_record(&self) -> SplitRecord {
        let mut train_counts = BTreeMap::new();
        for &i in &self.train_indices {
            *train_counts.entry(i).or_insert(0) += 1;
        }
        SplitRecord {
            source_size: self.source_size,
            train_counts,
            test_indices: self.test_indices.clone(),
        }
    }
}

/// Draws an out-of-bootstrap split.
///
/// Training: `n` draws with replacement. Test: `min(n_test, |C|)` draws without
/// replacement from the complement `C` of the training support. With `strata`, both
/// counts apply per stratum and each stratum is resampled separately.
pub fn oob_split(
    source_size: usize,
    n: usize,
    n_test: usize,
    strata: Option<&[u32]>,
    stream: &mut RngStream,
) -> Result<SplitSpec> {
    if source_size < 2 {
        return Err(Error::domain(format!("source size must be at least 2, got {source_size}")));
    }
    if n == 0 || n_test == 0 {
        return Err(Error::domain("train and test sizes must be positive"));
    }

    let groups: Vec<Vec<usize>> = match strata {
        None => vec![(0..source_size).collect()],
        Some(labels) => {
            if labels.len() != source_size {
                return Err(Error::domain(format!(
                    "strata has {} labels for a source of {source_size}",
                    labels.len()
                )));
            }
            let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                by_label.entry(l).or_default().push(i);
            }
            by_label.into_values().collect()
        }
    };

    let mut in_train = vec![false; source_size];
    let mut train = Vec::with_capacity(n * groups.len());
    let mut test = Vec::with_capacity(n_test * groups.len());
    let mut requested = 0;
    for members in &groups {
        let start = train.len();
        for _ in 0..n {
            let idx = members[stream.index(members.len())];
            in_train[idx] = true;
            train.push(idx);
        }
        let mut complement: Vec<usize> = members.iter().copied().filter(|&i| !in_train[i]).collect();
        if complement.is_empty() {
            return Err(Error::EmptyComplement {
                source_size: members.len(),
                draws: train.len() - start,
            });
        }
        let take = n_test.min(complement.len());
        if take < n_test {
            log::warn!(
                "out-of-bootstrap complement has {} items, test set truncated from {n_test}",
                complement.len()
            );
        }
        for i in 0..take {
            let j = i + stream.index(complement.len() - i);
            complement.swap(i, j);
        }
        test.extend_from_slice(&complement[..take]);
        requested += n_test;
    }
    test.sort_unstable();

    Ok(SplitSpec {
        source_size,
        train_indices: train,
        test_indices: test,
        requested_test_size: requested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_fraction_matches_analytic_expectation() {
        let n = 1000;
        let expected = (1.0 - 1.0 / n as f64).powi(n as i32);
        let root = RngStream::new(11);
        let mut total = 0.0;
        for s in 0..200 {
            let split = oob_split(n, n, n, None, &mut root.child("split", s)).unwrap();
            total += (n - split.unique_train()) as f64 / n as f64;
        }
        let observed = total / 200.0;
        assert!((observed - expected).abs() < 0.03, "{observed} vs {expected}");
    }

    #[test]
    fn disjoint_and_sized() {
        let mut s = RngStream::new(3);
        for _ in 0..50 {
            let split = oob_split(100, 100, 20, None, &mut s).unwrap();
            assert_eq!(split.train_indices().len(), 100);
            assert_eq!(split.test_indices().len(), 20);
            for t in split.test_indices() {
                assert!(!split.train_indices().contains(t));
            }
        }
    }

    #[test]
    fn stratified_counts_per_class() {
        let labels: Vec<u32> = (0..200).map(|i| (i % 2) as u32).collect();
        let mut s = RngStream::new(5);
        let split = oob_split(200, 40, 10, Some(&labels), &mut s).unwrap();
        assert_eq!(split.train_indices().len(), 80);
        let per: Vec<usize> = (0..2)
            .map(|c| split.test_indices().iter().filter(|&&i| labels[i] == c).count())
            .collect();
        assert_eq!(per, vec![10, 10]);
        for &i in split.train_indices() {
            assert!(!split.test_indices().contains(&i));
        }
    }

    #[test]
    fn truncates_when_complement_small() {
        let mut s = RngStream::new(8);
        let split = oob_split(10, 10, 9, None, &mut s).unwrap();
        assert!(split.truncated());
        assert_eq!(split.test_indices().len(), 10 - split.unique_train());
    }

    #[test]
    fn empty_complement_is_an_error() {
        // A source of 2 with many draws leaves no complement almost surely.
        let mut s = RngStream::new(1);
        let err = oob_split(2, 64, 1, None, &mut s).unwrap_err();
        assert!(matches!(err, Error::EmptyComplement { .. }));
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut s = RngStream::new(1);
        assert!(oob_split(1, 1, 1, None, &mut s).is_err());
        assert!(oob_split(10, 0, 1, None, &mut s).is_err());
        assert!(oob_split(10, 1, 0, None, &mut s).is_err());
        assert!(oob_split(10, 1, 1, Some(&[0, 1]), &mut s).is_err());
    }

    #[test]
    fn record_counts_multiplicity() {
        let mut s = RngStream::new(2);
        let split = oob_split(50, 50, 5, None, &mut s).unwrap();
        let rec = split.to_record();
        assert_eq!(rec.train_counts.values().sum::<usize>(), 50);
        assert_eq!(rec.test_indices, split.test_indices());
    }
}
