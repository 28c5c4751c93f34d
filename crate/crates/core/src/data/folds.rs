use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::manifest::DatasetIndex;
use crate::error::{Error, Result};

/// Subject-level partition into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.assignments.get(subject).copied()
    }

    /// Subjects held out in `fold`, sorted.
    pub fn test_subjects(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn train_subjects(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// SHA-256 over the canonical `subject=fold` listing.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("k={}\n", self.k));
        for (s, f) in &self.assignments {
            h.update(format!("{s}={f}\n"));
        }
        hex::encode(h.finalize())
    }
}

/// Shuffles the sorted subject list with a seeded generator and deals it
/// round-robin. `k` equal to the subject count is leave-one-subject-out.
pub fn subject_kfold(index: &DatasetIndex, k: usize, seed: u64) -> Result<FoldSplit> {
    split_subjects(index.subjects(), k, seed)
}

pub fn split_subjects(mut subjects: Vec<String>, k: usize, seed: u64) -> Result<FoldSplit> {
    subjects.sort();
    subjects.dedup();
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    if k > subjects.len() {
        return Err(Error::config(format!(
            "{k} folds requested but only {} subjects available",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let assignments = subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i % k))
        .collect();
    Ok(FoldSplit { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn ten_subjects_five_folds() {
        let split = split_subjects(names(10), 5, 3).unwrap();
        assert_eq!(split.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn leave_one_subject_out() {
        let split = split_subjects(names(7), 7, 0).unwrap();
        assert_eq!(split.fold_sizes(), vec![1; 7]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = split_subjects(names(12), 4, 42).unwrap();
        let b = split_subjects(names(12), 4, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(matches!(
            split_subjects(names(3), 4, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_subjects(names(3), 1, 0),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn partition_is_balanced_and_complete(n in 2usize..40, k_raw in 2usize..40, seed in any::<u64>()) {
            let k = 2 + k_raw % (n - 1);
            let split = split_subjects(names(n), k, seed).unwrap();
            prop_assert_eq!(split.assignments.len(), n);
            let sizes = split.fold_sizes();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            let mut union: Vec<&str> = (0..k).flat_map(|f| split.test_subjects(f)).collect();
            union.sort();
            let all = names(n);
            prop_assert_eq!(union, all.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
}
