//! Shared fixtures for the benchmarks in `benches/`.

use fairaudit::dataset::{generate_synthetic, normalize};
use fairaudit::model::{train_tree, TreeConfig};
use fairaudit::{Dataset, DecisionTree};

/// Normalized synthetic data of `count` rows and the tree trained on it.
pub fn synthetic_fixture(count: usize) -> (Dataset, DecisionTree) {
    let ds = generate_synthetic(count, 0).expect("synthetic data");
    let (ds, _) = normalize(&ds).expect("normalizable");
    let tree = train_tree(&ds, &TreeConfig::default(), 0).expect("tree trains");
    (ds, tree)
}
