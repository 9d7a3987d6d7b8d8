//! The black-box classifier contract and its implementations.

mod external;
mod simple;
mod tree;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub use external::ExternalModel;
pub use simple::{ConstantPredictor, StumpPredictor};
pub use tree::{train_tree, DecisionTree, Node, TreeConfig, TREE_FORMAT_VERSION};

/// Prediction threshold used to turn soft outcomes into hard labels.
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

/// A queryable model `M`. Implementations must be deterministic and answer
/// for any finite input, including rows outside `[0, 1]^n`.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    /// One outcome in `[0, 1]` per row.
    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (**self).predict_batch(rows)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (**self).predict_batch(rows)
    }
}

/// Queries a predictor after checking the column count, then checks the
/// response shape and range.
pub fn predict<P: Predictor + ?Sized>(model: &P, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if rows.ncols() != model.n_features() {
        return Err(Error::arg(format!(
            "model expects {} features, got {}",
            model.n_features(),
            rows.ncols()
        )));
    }
    let out = model.predict_batch(rows)?;
    if out.len() != rows.nrows() {
        return Err(Error::arg(format!(
            "model returned {} outcomes for {} rows",
            out.len(),
            rows.nrows()
        )));
    }
    if let Some(v) = out.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::arg(format!("model outcome {v} outside [0, 1]")));
    }
    Ok(out)
}

pub fn hard_labels(outcomes: &[f64], threshold: f64) -> Vec<bool> {
    outcomes.iter().map(|&p| p > threshold).collect()
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;

    #[test]
    fn batch_shape_contract() {
        let model = ConstantPredictor::new(3, 1.0);
        let rows = Array2::<f64>::zeros((128, 3));
        assert_eq!(predict(&model, rows.view()).unwrap().len(), 128);
    }

    #[test]
    fn column_mismatch_is_argument_error() {
        let model = ConstantPredictor::new(3, 1.0);
        let rows = Array2::<f64>::zeros((2, 4));
        assert!(matches!(predict(&model, rows.view()), Err(Error::Argument(_))));
    }

    #[test]
    fn hard_labels_threshold_strictly() {
        assert_eq!(hard_labels(&[0.0, 0.5, 0.51, 1.0], 0.5), vec![false, false, true, true]);
    }
}
