use ndarray::ArrayView2;

use super::Predictor;
use crate::error::Result;

/// Returns the same outcome for every row.
#[derive(Clone, Debug)]
pub struct ConstantPredictor {
    n_features: usize,
    value: f64,
}

impl ConstantPredictor {
    pub fn new(n_features: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "outcome must lie in [0, 1]");
        Self { n_features, value }
    }
}

impl Predictor for ConstantPredictor {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(vec![self.value; rows.nrows()])
    }
}

/// `1` when `row[feature] > threshold`, else `0`.
///
/// On the synthetic dataset a stump on `biased` at 0.5 reproduces the label
/// exactly, which makes it the label-as-prediction oracle.
#[derive(Clone, Debug)]
pub struct StumpPredictor {
    n_features: usize,
    feature: usize,
    threshold: f64,
}

impl StumpPredictor {
    pub fn new(n_features: usize, feature: usize, threshold: f64) -> Self {
        assert!(feature < n_features);
        Self {
            n_features,
            feature,
            threshold,
        }
    }
}

impl Predictor for StumpPredictor {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(rows
            .rows()
            .into_iter()
            .map(|r| if r[self.feature] > self.threshold { 1.0 } else { 0.0 })
            .collect())
    }
}
