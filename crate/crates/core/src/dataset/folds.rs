use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Deterministic k-fold partition of `m` row indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
}

/// Shuffles `0..m` with a seeded ChaCha8 stream and deals the shuffled
/// positions round-robin, so fold sizes differ by at most one.
pub fn make_folds(m: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::arg(format!("fold count must be at least 2, got {k}")));
    }
    if m < k {
        return Err(Error::arg(format!("cannot split {m} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; m];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    fn indices_where(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| keep(f))
            .map(|(i, _)| i)
            .collect()
    }
}

/// A protected value that never appears in some test fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldCoverageGap {
    pub fold: usize,
    pub feature: String,
    pub missing_value: f64,
}

/// Lists protected values absent from each test fold and logs a warning for each.
pub fn check_fold_coverage(ds: &Dataset, plan: &FoldPlan) -> Result<Vec<FoldCoverageGap>> {
    if plan.assignments.len() != ds.len() {
        return Err(Error::arg("fold plan does not match dataset length"));
    }
    let mut gaps = Vec::new();
    for feature in &ds.schema().protected {
        let all = ds.distinct_values(feature)?;
        let col = ds.column(feature)?;
        for fold in 0..plan.k {
            for &v in &all {
                let present = plan
                    .assignments
                    .iter()
                    .zip(col.iter())
                    .any(|(&f, &x)| f == fold && x == v);
                if !present {
                    log::warn!("fold {fold}: protected feature `{feature}` has no rows with value {v}");
                    gaps.push(FoldCoverageGap {
                        fold,
                        feature: feature.clone(),
                        missing_value: v,
                    });
                }
            }
        }
    }
    Ok(gaps)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn even_split() {
        let plan = make_folds(10, 5, 3).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder_split() {
        let plan = make_folds(7, 5, 3).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(50, 5, 31).unwrap(), make_folds(50, 5, 31).unwrap());
        assert_ne!(make_folds(50, 5, 31).unwrap(), make_folds(50, 5, 22).unwrap());
    }

    #[test]
    fn argument_errors() {
        assert!(make_folds(4, 5, 0).is_err());
        assert!(make_folds(10, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_indices(m in 2usize..200, k in 2usize..10, seed: u64) {
            prop_assume!(m >= k);
            let plan = make_folds(m, k, seed).unwrap();
            let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_indices(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            let sizes = plan.fold_sizes();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(*lo >= 1 && hi - lo <= 1);
        }
    }
}
