//! Sample-wise stratified k-fold splitting with a per-fold early-stop holdout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index sets of one cross-validation fold. The three sets are disjoint;
/// test sets across folds partition the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    /// Early-stopping holdout carved out of the training portion.
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits sample indices into `k` stratified folds: per-class shuffle under
/// the seed, round-robin assignment to folds (remainders spread over the
/// leading folds), then a stratified `es_holdout_fraction` of each fold's
/// training portion reserved for early stopping.
pub fn stratified_kfold(
    labels: &[usize],
    k: usize,
    es_holdout_fraction: f64,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if !(0.0..1.0).contains(&es_holdout_fraction) {
        return Err(Error::InvalidConfig("holdout fraction must be in [0, 1)".into()));
    }

    let num_classes = labels.iter().max().unwrap() + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &label) in labels.iter().enumerate() {
        per_class[label].push(i);
    }
    let min_count = per_class.iter().map(|c| c.len()).filter(|&n| n > 0).min().unwrap();
    if k > min_count {
        return Err(Error::InvalidConfig(format!(
            "k={k} exceeds the smallest class count {min_count}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // fold_members[f][c] = this fold's shuffled indices of class c
    let mut fold_members: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); num_classes]; k];
    for (class, indices) in per_class.iter().enumerate() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        for (i, &idx) in shuffled.iter().enumerate() {
            fold_members[i % k][class].push(idx);
        }
    }

    let mut splits = Vec::with_capacity(k);
    for fold in 0..k {
        let test: Vec<usize> = fold_members[fold].iter().flatten().copied().collect();
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for class in 0..num_classes {
            // this class's training pool, in fold order
            let pool: Vec<usize> = (0..k)
                .filter(|&f| f != fold)
                .flat_map(|f| fold_members[f][class].iter().copied())
                .collect();
            let holdout = (es_holdout_fraction * pool.len() as f64).round() as usize;
            validation.extend_from_slice(&pool[..holdout]);
            train.extend_from_slice(&pool[holdout..]);
        }
        splits.push(FoldSplit { fold, train, validation, test });
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn balanced_labels(per_class: usize, classes: usize) -> Vec<usize> {
        (0..per_class * classes).map(|i| i / per_class).collect()
    }

    #[test]
    fn full_scale_split_has_240_per_class_per_test_fold() {
        let labels = balanced_labels(1200, 7);
        let splits = stratified_kfold(&labels, 5, 0.1, 42).unwrap();
        assert_eq!(splits.len(), 5);
        for split in &splits {
            assert_eq!(split.test.len(), 1680);
            let mut counts = [0usize; 7];
            for &i in &split.test {
                counts[labels[i]] += 1;
            }
            assert_eq!(counts, [240; 7]);
            // holdout is 10% of the 960 training samples per class
            assert_eq!(split.validation.len(), 7 * 96);
            assert_eq!(split.train.len(), 7 * 864);
        }
    }

    #[test]
    fn minimal_split_one_per_class_per_fold() {
        let labels = balanced_labels(5, 7);
        let splits = stratified_kfold(&labels, 5, 0.0, 1).unwrap();
        for split in &splits {
            let mut counts = [0usize; 7];
            for &i in &split.test {
                counts[labels[i]] += 1;
            }
            assert_eq!(counts, [1; 7]);
            assert!(split.validation.is_empty());
        }
    }

    #[test]
    fn sets_are_disjoint_and_tests_partition() {
        let labels = balanced_labels(30, 7);
        let splits = stratified_kfold(&labels, 5, 0.1, 3).unwrap();
        let mut seen_in_tests = HashSet::new();
        for split in &splits {
            let train: HashSet<usize> = split.train.iter().copied().collect();
            let val: HashSet<usize> = split.validation.iter().copied().collect();
            let test: HashSet<usize> = split.test.iter().copied().collect();
            assert!(train.is_disjoint(&val));
            assert!(train.is_disjoint(&test));
            assert!(val.is_disjoint(&test));
            assert_eq!(train.len() + val.len() + test.len(), labels.len());
            for &i in &split.test {
                assert!(seen_in_tests.insert(i), "test sets must not overlap across folds");
            }
        }
        assert_eq!(seen_in_tests.len(), labels.len());
    }

    #[test]
    fn same_seed_reproduces_the_split() {
        let labels = balanced_labels(20, 7);
        let a = stratified_kfold(&labels, 5, 0.1, 7).unwrap();
        let b = stratified_kfold(&labels, 5, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&labels, 5, 0.1, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unbalanced_remainders_spread_deterministically() {
        // 23 samples of one class over 5 folds: 5,5,5,4,4
        let labels = vec![0; 23];
        let splits = stratified_kfold(&labels, 5, 0.0, 0).unwrap();
        let sizes: Vec<usize> = splits.iter().map(|s| s.test.len()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn k_larger_than_smallest_class_is_an_error() {
        let mut labels = balanced_labels(10, 6);
        labels.extend([6usize; 3]); // class 6 has only 3 samples
        assert!(stratified_kfold(&labels, 5, 0.1, 0).is_err());
        assert!(stratified_kfold(&labels, 3, 0.1, 0).is_ok());
    }
}
